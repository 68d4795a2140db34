#include "mmpd/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mmpd/errors.hpp"
#include "mmpd/rollout.hpp"

namespace mmpd {

AgreementFeatures agreement_features(std::span<const Transition> chunk,
                                     const PolicyParams& evaluated) {
  if (chunk.size() != static_cast<std::size_t>(kChunkTransitions)) {
    throw UsageError("agreement_features: chunk must contain exactly " +
                     std::to_string(kChunkTransitions) + " transitions, got " +
                     std::to_string(chunk.size()));
  }
  AgreementFeatures f;
  f.reserve(static_cast<std::size_t>(kNumAgents) * kChunkTransitions);
  for (const Transition& tr : chunk) {
    for (int k = 0; k < kNumAgents; ++k) {
      const bool agree = greedy_action(evaluated, k, tr.state) == tr.actions[k];
      f.push_back(agree ? 1.0 : 0.0);
    }
  }
  return f;
}

std::vector<AgreementFeatures> agreement_feature_chunks(
    std::span<const Transition> demos, const PolicyParams& evaluated) {
  std::vector<AgreementFeatures> out;
  for (std::size_t i = 0; i + kChunkTransitions <= demos.size();
       i += kChunkTransitions) {
    out.push_back(
        agreement_features(demos.subspan(i, kChunkTransitions), evaluated));
  }
  return out;
}

double gaussian_kernel(std::span<const double> u, std::span<const double> v,
                       double sigma) {
  if (u.size() != v.size()) {
    throw UsageError("gaussian_kernel: vector lengths differ (" +
                     std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()) + ")");
  }
  if (!(sigma > 0)) {
    throw UsageError("gaussian_kernel: sigma must be > 0");
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

namespace {

double squared_distance(const AgreementFeatures& u,
                        const AgreementFeatures& v) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    d2 += d * d;
  }
  return d2;
}

// Median of pairwise Euclidean distances over the pooled samples; 0 when
// every pair coincides.
double median_pairwise_distance(const std::vector<AgreementFeatures>& p,
                                const std::vector<AgreementFeatures>& q) {
  std::vector<const AgreementFeatures*> pool;
  pool.reserve(p.size() + q.size());
  for (const auto& x : p) pool.push_back(&x);
  for (const auto& y : q) pool.push_back(&y);
  std::vector<double> dists;
  dists.reserve(pool.size() * (pool.size() - 1) / 2);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      dists.push_back(std::sqrt(squared_distance(*pool[i], *pool[j])));
    }
  }
  if (dists.empty()) return 0.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t n = dists.size();
  if (n % 2 == 1) return dists[n / 2];
  return 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
}

// Mean kernel value over all cross pairs (diagonal included when a == b).
double mean_kernel(const std::vector<AgreementFeatures>& a,
                   const std::vector<AgreementFeatures>& b, double sigma) {
  double sum = 0.0;
  for (const auto& x : a) {
    for (const auto& y : b) {
      sum += gaussian_kernel(x, y, sigma);
    }
  }
  return sum / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

double mean_disagreement(const AgreementFeatures& f) {
  double sum = 0.0;
  for (double v : f) sum += v;
  return 1.0 - sum / static_cast<double>(f.size());
}

}  // namespace

MmdReport mmd(const std::vector<AgreementFeatures>& samples_p,
              const std::vector<AgreementFeatures>& samples_q,
              std::optional<double> sigma) {
  if (samples_p.empty() || samples_q.empty()) {
    throw UsageError("mmd: sample sets must be nonempty");
  }
  const std::size_t dim = samples_p.front().size();
  for (const auto& x : samples_p) {
    if (x.size() != dim) throw UsageError("mmd: inconsistent feature lengths");
  }
  for (const auto& y : samples_q) {
    if (y.size() != dim) throw UsageError("mmd: inconsistent feature lengths");
  }

  MmdReport report;
  report.samples_p = samples_p.size();
  report.samples_q = samples_q.size();
  if (sigma.has_value()) {
    if (!(*sigma > 0)) throw UsageError("mmd: sigma must be > 0");
    report.sigma = *sigma;
  } else {
    const double median = median_pairwise_distance(samples_p, samples_q);
    report.sigma = median > 0 ? median : 1.0;
    report.sigma_from_median = true;
  }

  const double pp = mean_kernel(samples_p, samples_p, report.sigma);
  const double pq = mean_kernel(samples_p, samples_q, report.sigma);
  const double qq = mean_kernel(samples_q, samples_q, report.sigma);
  report.mmd = std::sqrt(std::max(0.0, pp - 2.0 * pq + qq));

  for (const auto& x : samples_p) {
    report.disagreement_p.push_back(mean_disagreement(x));
  }
  for (const auto& y : samples_q) {
    report.disagreement_q.push_back(mean_disagreement(y));
  }
  return report;
}

double frechet_distance(const Trajectory2D& p, const Trajectory2D& q) {
  if (p.empty() || q.empty()) {
    throw UsageError("frechet_distance: trajectories must be nonempty");
  }
  const std::size_t n = p.size();
  const std::size_t m = q.size();
  std::vector<double> prev(m);
  std::vector<double> cur(m);

  prev[0] = distance(p[0], q[0]);
  for (std::size_t j = 1; j < m; ++j) {
    prev[j] = std::max(prev[j - 1], distance(p[0], q[j]));
  }
  for (std::size_t i = 1; i < n; ++i) {
    cur[0] = std::max(prev[0], distance(p[i], q[0]));
    for (std::size_t j = 1; j < m; ++j) {
      const double reach = std::min({prev[j], prev[j - 1], cur[j - 1]});
      cur[j] = std::max(reach, distance(p[i], q[j]));
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

ComparisonReport compare_policies(const KnownPolicy& a, const KnownPolicy& b,
                                  const ArenaConfig& arena, int episodes,
                                  std::uint64_t seed) {
  if (episodes < 1) throw UsageError("compare_policies: episodes must be >= 1");
  arena.validate();

  ComparisonReport report;
  report.id_a = a.id;
  report.id_b = b.id;
  report.episodes = episodes;
  report.seed = seed;

  for (int i = 0; i < episodes; ++i) {
    const std::uint64_t episode_seed = derive_seed(seed, i);
    const EpisodeRollout ra =
        run_episode(a.params, arena, episode_seed, ActMode::Greedy);
    const EpisodeRollout rb =
        run_episode(b.params, arena, episode_seed, ActMode::Greedy);
    for (int k = 0; k < kNumAgents; ++k) {
      report.mean_frechet[k] += frechet_distance(agent_trajectory(ra.log, k),
                                                 agent_trajectory(rb.log, k));
    }
  }
  for (int k = 0; k < kNumAgents; ++k) {
    report.mean_frechet[k] /= episodes;
  }

  if (a.demos.size() < static_cast<std::size_t>(kChunkTransitions)) {
    throw UsageError("compare_policies: policy '" + a.id +
                     "' has fewer than " + std::to_string(kChunkTransitions) +
                     " demonstration transitions");
  }
  const std::vector<AgreementFeatures> chunks_a =
      agreement_feature_chunks(a.demos, a.params);
  const std::vector<AgreementFeatures> chunks_b =
      agreement_feature_chunks(a.demos, b.params);
  report.mmd = mmd(chunks_a, chunks_b);
  for (int k = 0; k < kNumAgents; ++k) {
    report.disagreement[k] = greedy_disagreement_rate(b.params, a.demos, k);
  }
  return report;
}

}  // namespace mmpd
