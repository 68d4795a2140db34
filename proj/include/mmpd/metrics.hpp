#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmpd/arena.hpp"
#include "mmpd/diversity.hpp"
#include "mmpd/sac.hpp"

namespace mmpd {

// Demonstration buffers are chunked into fixed windows of this many
// transitions; each window yields one agreement-feature vector, so the MMD
// estimator sees several samples per policy pair.
inline constexpr int kChunkTransitions = 32;

// Binary vector of length kNumAgents * kChunkTransitions, (t-major,
// agent-minor): entry (t, k) is 1 iff the evaluated policy's greedy action
// for agent k on the stored state equals the stored action.
using AgreementFeatures = std::vector<double>;

using Trajectory2D = std::vector<Vec2>;

// Requires exactly kChunkTransitions transitions (callers chunk and drop
// the tail); throws UsageError otherwise.
AgreementFeatures agreement_features(std::span<const Transition> chunk,
                                     const PolicyParams& evaluated);

// All full windows over the buffer, tail dropped.
std::vector<AgreementFeatures> agreement_feature_chunks(
    std::span<const Transition> demos, const PolicyParams& evaluated);

// exp(-|u - v|^2 / (2 sigma^2)); throws UsageError on length mismatch or
// sigma <= 0.
double gaussian_kernel(std::span<const double> u, std::span<const double> v,
                       double sigma);

struct MmdReport {
  double mmd = 0.0;
  double sigma = 0.0;
  bool sigma_from_median = false;  // true when the median heuristic chose it
  std::size_t samples_p = 0;
  std::size_t samples_q = 0;
  // Per-sample disagreement rate (1 - mean entry) of each feature vector.
  std::vector<double> disagreement_p;
  std::vector<double> disagreement_q;
};

// Biased (V-statistic, diagonal included) Gaussian-kernel MMD:
// sqrt(max(0, E[k(x,x')] - 2 E[k(x,y)] + E[k(y,y')])). When sigma is not
// given, uses the median of pairwise distances over the pooled samples
// (fallback 1.0 when that median is 0).
MmdReport mmd(const std::vector<AgreementFeatures>& samples_p,
              const std::vector<AgreementFeatures>& samples_q,
              std::optional<double> sigma = std::nullopt);

// Discrete Fréchet distance, Euclidean ground metric, O(|P| |Q|) dynamic
// program. Throws UsageError on empty input.
double frechet_distance(const Trajectory2D& p, const Trajectory2D& q);

struct ComparisonReport {
  std::string id_a;
  std::string id_b;
  int episodes = 0;
  std::uint64_t seed = 0;
  // Mean over episode pairs of the per-agent Fréchet distance between the
  // two policies' trajectories from identical resets.
  std::array<double, kNumAgents> mean_frechet{};
  // MMD over agreement features evaluated on a's demonstration chunks.
  MmdReport mmd;
  // Mean greedy disagreement of b against a's stored actions, per agent.
  std::array<double, kNumAgents> disagreement{};
};

// Greedy rollouts of both policies from identical seeds (episode i uses
// derive_seed(seed, i)), Fréchet per agent, plus MMD and disagreement on
// a's demonstrations.
ComparisonReport compare_policies(const KnownPolicy& a, const KnownPolicy& b,
                                  const ArenaConfig& arena, int episodes,
                                  std::uint64_t seed);

}  // namespace mmpd
