#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mmpd/diversity.hpp"
#include "mmpd/errors.hpp"
#include "mmpd/metrics.hpp"
#include "mmpd/rng.hpp"
#include "mmpd/rollout.hpp"

using namespace mmpd;

namespace {

// Exhaustive reference: walk every monotone coupling of p and q (steps
// advance one or both sequences) and keep the smallest worst-case link.
double frechet_by_enumeration(const Trajectory2D& p, const Trajectory2D& q,
                              std::size_t i, std::size_t j, double worst) {
  worst = std::max(worst, distance(p[i], q[j]));
  const bool pi = i + 1 < p.size();
  const bool qj = j + 1 < q.size();
  if (!pi && !qj) return worst;
  double best = std::numeric_limits<double>::infinity();
  if (pi) best = std::min(best, frechet_by_enumeration(p, q, i + 1, j, worst));
  if (qj) best = std::min(best, frechet_by_enumeration(p, q, i, j + 1, worst));
  if (pi && qj) {
    best = std::min(best, frechet_by_enumeration(p, q, i + 1, j + 1, worst));
  }
  return best;
}

Trajectory2D random_trajectory(Rng& rng, std::size_t max_len) {
  Trajectory2D t(1 + rng.uniform_int(int(max_len)));
  for (Vec2& v : t) {
    v.x = rng.uniform(0.0, 40.0);
    v.y = rng.uniform(0.0, 40.0);
  }
  return t;
}

AgreementFeatures random_binary(Rng& rng, std::size_t dim) {
  AgreementFeatures f(dim);
  for (double& v : f) v = rng.uniform_int(2) ? 1.0 : 0.0;
  return f;
}

double euclidean(const AgreementFeatures& u, const AgreementFeatures& v) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d2 += (u[i] - v[i]) * (u[i] - v[i]);
  }
  return std::sqrt(d2);
}

SacConfig tiny_sac() {
  SacConfig cfg;
  cfg.hidden_sizes = {8};
  return cfg;
}

}  // namespace

TEST_CASE("frechet distance matches an exhaustive coupling search") {
  Rng rng(2024);
  for (int trial = 0; trial < 220; ++trial) {
    const Trajectory2D p = random_trajectory(rng, 6);
    const Trajectory2D q = random_trajectory(rng, 6);
    const double dp = frechet_distance(p, q);
    const double ref = frechet_by_enumeration(p, q, 0, 0, 0.0);
    CHECK(std::fabs(dp - ref) <= 1e-12);
  }
}

TEST_CASE("frechet distance handles degenerate and hand-checked inputs") {
  const Trajectory2D line{{0.0, 0.0}, {2.0, 0.0}, {4.0, 0.0}};
  CHECK(frechet_distance(line, line) == doctest::Approx(0.0).epsilon(1e-15));

  const Trajectory2D a{{1.0, 2.0}};
  const Trajectory2D b{{4.0, 6.0}};
  CHECK(frechet_distance(a, b) == doctest::Approx(5.0));

  // A single point against a segment: the point must pair with every vertex,
  // so the farthest one decides.
  const Trajectory2D point{{0.0, 3.0}};
  CHECK(frechet_distance(point, line) == doctest::Approx(5.0));
  CHECK(frechet_distance(line, point) == doctest::Approx(5.0));

  // Symmetry on random inputs.
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const Trajectory2D p = random_trajectory(rng, 6);
    const Trajectory2D q = random_trajectory(rng, 6);
    CHECK(frechet_distance(p, q) ==
          doctest::Approx(frechet_distance(q, p)).epsilon(1e-14));
  }

  CHECK_THROWS_AS(frechet_distance({}, line), UsageError);
  CHECK_THROWS_AS(frechet_distance(line, {}), UsageError);
}

TEST_CASE("gaussian kernel matches the closed form and validates input") {
  const std::vector<double> u{1.0, 0.0, 1.0, 1.0};
  const std::vector<double> v{0.0, 0.0, 1.0, 0.0};
  // Squared distance 2, sigma 1.5.
  CHECK(gaussian_kernel(u, v, 1.5) ==
        doctest::Approx(std::exp(-2.0 / (2.0 * 2.25))).epsilon(1e-15));
  CHECK(gaussian_kernel(u, u, 0.3) == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<double> w{1.0, 2.0};
  CHECK_THROWS_AS(gaussian_kernel(u, w, 1.0), UsageError);
  CHECK_THROWS_AS(gaussian_kernel(u, v, 0.0), UsageError);
  CHECK_THROWS_AS(gaussian_kernel(u, v, -1.0), UsageError);
}

TEST_CASE("singleton mmd equals sqrt(2 - 2 k(x, y))") {
  Rng rng(91);
  for (int trial = 0; trial < 100; ++trial) {
    const AgreementFeatures x = random_binary(rng, 64);
    const AgreementFeatures y = random_binary(rng, 64);

    // Fixed bandwidth.
    const MmdReport fixed = mmd({x}, {y}, 1.0);
    const double k_fixed = gaussian_kernel(x, y, 1.0);
    CHECK(std::fabs(fixed.mmd - std::sqrt(std::max(0.0, 2.0 - 2.0 * k_fixed))) <=
          1e-12);
    CHECK_FALSE(fixed.sigma_from_median);
    CHECK(fixed.sigma == 1.0);

    // Median heuristic: with one pair the median is their distance.
    const MmdReport med = mmd({x}, {y});
    const double d = euclidean(x, y);
    const double expect_sigma = d > 0 ? d : 1.0;
    CHECK(med.sigma == doctest::Approx(expect_sigma).epsilon(1e-14));
    CHECK(med.sigma_from_median);
    const double k_med = gaussian_kernel(x, y, med.sigma);
    CHECK(std::fabs(med.mmd - std::sqrt(std::max(0.0, 2.0 - 2.0 * k_med))) <=
          1e-12);
    CHECK(med.samples_p == 1);
    CHECK(med.samples_q == 1);
  }
}

TEST_CASE("mmd of a sample set against itself vanishes") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<AgreementFeatures> set;
    const std::size_t n = 1 + rng.uniform_int(8);
    for (std::size_t i = 0; i < n; ++i) set.push_back(random_binary(rng, 64));
    const MmdReport r = mmd(set, set);
    CHECK(r.mmd <= 1e-12);
    CHECK(r.disagreement_p == r.disagreement_q);
  }
}

TEST_CASE("mmd grows strictly with the disagreement count") {
  const std::size_t dim = 64;
  AgreementFeatures x(dim, 1.0);
  double prev = -1.0;
  for (int d = 0; d <= 4; ++d) {
    AgreementFeatures y(dim, 1.0);
    for (int i = 0; i < d; ++i) y[i] = 0.0;
    const MmdReport r = mmd({x}, {y}, 1.0);
    // Closed form at sigma 1: sqrt(2 - 2 exp(-d / 2)).
    const double expect = std::sqrt(2.0 - 2.0 * std::exp(-d / 2.0));
    CHECK(r.mmd == doctest::Approx(expect).epsilon(1e-12));
    CHECK(r.mmd > prev);
    prev = r.mmd;

    // Disagreement rate mirrors the flipped fraction.
    CHECK(r.disagreement_q[0] == doctest::Approx(double(d) / dim));
    CHECK(r.disagreement_p[0] == doctest::Approx(0.0));
  }
}

TEST_CASE("default bandwidth is the median pairwise distance") {
  const AgreementFeatures a{0.0, 0.0, 0.0, 0.0};
  const AgreementFeatures b{1.0, 0.0, 0.0, 0.0};
  const AgreementFeatures c{1.0, 1.0, 1.0, 1.0};
  // Pairwise distances: |a-b| = 1, |a-c| = 2, |b-c| = sqrt(3).
  const MmdReport r = mmd({a, b}, {c});
  CHECK(r.sigma == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));
  CHECK(r.sigma_from_median);

  // Even pool size averages the middle two: pairs of {a, b, c, d} below give
  // distances {1, 2, sqrt(2), sqrt(3), 1, sqrt(2)} -> median sqrt(2).
  const AgreementFeatures d{1.0, 1.0, 0.0, 0.0};
  const MmdReport r2 = mmd({a, b}, {c, d});
  CHECK(r2.sigma == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

  // Identical pools collapse the median to zero; bandwidth falls back to 1.
  const MmdReport r3 = mmd({a, a}, {a});
  CHECK(r3.sigma == 1.0);
  CHECK(r3.sigma_from_median);
  CHECK(r3.mmd <= 1e-12);

  // An explicit sigma wins over the heuristic.
  const MmdReport r4 = mmd({a, b}, {c}, 2.5);
  CHECK(r4.sigma == 2.5);
  CHECK_FALSE(r4.sigma_from_median);

  CHECK_THROWS_AS(mmd({}, {a}), UsageError);
  CHECK_THROWS_AS(mmd({a}, {}), UsageError);
  CHECK_THROWS_AS(mmd({a}, {b}, 0.0), UsageError);
  CHECK_THROWS_AS(mmd({a}, {{1.0, 0.0}}), UsageError);
}

TEST_CASE("agreement features run time-major with agents interleaved") {
  // A zero-initialized actor ties every logit, so greedy play always picks
  // action 0; stored actions then control each feature entry exactly.
  SacConfig cfg = tiny_sac();
  PolicyParams params = init_policy(cfg, 5);
  for (auto& agent : params.agents) agent.actor = Mlp::zeros(agent.actor.sizes);

  std::vector<Transition> chunk(kChunkTransitions);
  for (int t = 0; t < kChunkTransitions; ++t) {
    chunk[t].state.assign(kObservationSize, 0.1);
    chunk[t].actions = {t % 2 == 0 ? 0 : 3, 5};
  }
  const AgreementFeatures f = agreement_features(chunk, params);
  REQUIRE(f.size() == std::size_t(kNumAgents * kChunkTransitions));
  for (int t = 0; t < kChunkTransitions; ++t) {
    CHECK(f[2 * t] == (t % 2 == 0 ? 1.0 : 0.0));
    CHECK(f[2 * t + 1] == 0.0);
  }

  // Windows chunk in order and the tail is dropped.
  std::vector<Transition> demos(2 * kChunkTransitions + 7);
  for (std::size_t i = 0; i < demos.size(); ++i) {
    demos[i].state.assign(kObservationSize, 0.1);
    demos[i].actions = {int(i / kChunkTransitions) == 0 ? 0 : 1, 0};
  }
  const auto chunks = agreement_feature_chunks(demos, params);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0][0] == 1.0);   // first window stored action 0
  CHECK(chunks[1][0] == 0.0);   // second window stored action 1
  CHECK(chunks[0] == agreement_features(
                         std::span<const Transition>(demos).subspan(0, 32),
                         params));

  std::vector<Transition> short_chunk(kChunkTransitions - 1);
  CHECK_THROWS_AS(agreement_features(short_chunk, params), UsageError);
  std::vector<Transition> long_chunk(kChunkTransitions + 1);
  CHECK_THROWS_AS(agreement_features(long_chunk, params), UsageError);
}

TEST_CASE("compare_policies is deterministic and null on self-comparison") {
  SacConfig cfg = tiny_sac();
  ArenaConfig arena;
  const PolicyParams pa = init_policy(cfg, 11);
  const PolicyParams pb = init_policy(cfg, 12);

  const DemonstrationSet da = collect_demonstrations(pa, arena, 3, 500);
  const DemonstrationSet db = collect_demonstrations(pb, arena, 3, 501);
  REQUIRE(da.transition_count() >= std::size_t(kChunkTransitions));
  const KnownPolicy a = make_known("pol-a", pa, da);
  const KnownPolicy b = make_known("pol-b", pb, db);

  const ComparisonReport self = compare_policies(a, a, arena, 4, 99);
  CHECK(self.mean_frechet[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(self.mean_frechet[1] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(self.disagreement[0] == 0.0);
  CHECK(self.disagreement[1] == 0.0);
  CHECK(self.mmd.mmd <= 1e-12);
  CHECK(self.id_a == "pol-a");
  CHECK(self.id_b == "pol-a");

  const ComparisonReport r1 = compare_policies(a, b, arena, 4, 99);
  const ComparisonReport r2 = compare_policies(a, b, arena, 4, 99);
  CHECK(r1.mean_frechet == r2.mean_frechet);
  CHECK(r1.mmd.mmd == r2.mmd.mmd);
  CHECK(r1.disagreement == r2.disagreement);
  CHECK(r1.episodes == 4);
  CHECK(r1.seed == 99);

  CHECK_THROWS_AS(compare_policies(a, b, arena, 0, 99), UsageError);

  KnownPolicy thin = a;
  thin.demos.resize(kChunkTransitions - 1);
  CHECK_THROWS_AS(compare_policies(thin, b, arena, 2, 99), UsageError);
}
