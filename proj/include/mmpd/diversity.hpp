#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmpd/arena.hpp"
#include "mmpd/rollout.hpp"
#include "mmpd/sac.hpp"
#include "mmpd/trainer.hpp"

namespace mmpd {

// Penalty relabeling knobs: matched known transitions re-enter the replay
// buffer with reward - penalty_reward. mixing_ratio bounds relabeled
// insertions relative to fresh environment steps per round.
struct PenaltyConfig {
  double penalty_reward = 1.0;
  int relabel_batch_size = 128;
  double mixing_ratio = 0.5;

  std::vector<std::string> violations() const;
  void validate() const;
  bool operator==(const PenaltyConfig&) const = default;
};

// Greedy episodes of one policy, kept with full logs so the same rollouts
// feed relabeling, agreement features and trajectory files.
struct DemonstrationSet {
  std::vector<EpisodeRollout> episodes;
  std::uint64_t seed = 0;

  std::vector<Transition> flat() const;  // episode-major concatenation
  std::size_t transition_count() const;
};

// A frozen, previously trained joint-policy with its demonstration buffer.
struct KnownPolicy {
  std::string id;
  PolicyParams params;
  std::vector<Transition> demos;  // flat, episode-major
  std::uint64_t demo_seed = 0;
  int demo_episodes = 0;
};

KnownPolicy make_known(std::string id, PolicyParams params,
                       const DemonstrationSet& demos);

// Agent indices forced to act differently from known policies. Subset of
// {0, ..., kNumAgents-1}; empty means plain task training.
using AgentSelection = std::vector<int>;

// Throws UsageError on out-of-range or duplicate indices.
void validate_selection(const AgentSelection& selected);

// Greedy episodes with the original task rewards; episode i resets with
// derive_seed(seed, i). Deterministic given (params, seed).
DemonstrationSet collect_demonstrations(const PolicyParams& params,
                                        const ArenaConfig& arena, int episodes,
                                        std::uint64_t seed);

// True iff ANY selected agent's greedy action at the stored state equals
// the stored action (match => penalize); false iff all selected differ.
bool matches_known(const PolicyParams& params, const Transition& transition,
                   const AgentSelection& selected);

// For matched transitions, emits a copy with reward reduced by
// penalty_reward; unmatched transitions emit nothing. Order preserved;
// states, actions and done flags never change.
std::vector<Transition> relabel_known_batch(const PolicyParams& params,
                                            std::span<const Transition> batch,
                                            const AgentSelection& selected,
                                            const PenaltyConfig& penalty);

// Fraction of demo states where the policy's greedy action for `agent`
// differs from the stored action.
double greedy_disagreement_rate(const PolicyParams& params,
                                std::span<const Transition> demos, int agent);

struct AgentRate {
  int agent = 0;
  double rate = 0.0;
};

struct KnownDisagreement {
  std::string known_id;
  std::vector<AgentRate> rates;  // one per selected agent
};

struct DiverseTrainResult {
  PolicyParams params;
  TrainReport report;
  std::vector<KnownDisagreement> disagreement;  // final, on demo states
};

// Task training plus penalty rounds: every round, for each known policy, a
// demonstration batch is relabeled against the current greedy policy and
// mixed into the replay buffer. Round length is chosen so relabeled
// insertions never exceed mixing_ratio times fresh steps. With empty
// `known` and `selected` this is exactly train_baseline (same seed, same
// parameters).
DiverseTrainResult train_diverse_policy(
    const std::vector<KnownPolicy>& known, const AgentSelection& selected,
    const PenaltyConfig& penalty, const SacConfig& sac,
    const ArenaConfig& arena, std::uint64_t seed, long step_budget,
    const ActionMask& mask = all_actions_allowed());

// One policy to produce: train with `agents` selected against the named
// known policies (ids must resolve to earlier entries or registry content).
struct ScheduleEntry {
  std::string id;
  AgentSelection agents;
  std::vector<std::string> known;
  bool operator==(const ScheduleEntry&) const = default;
};

using DiversitySchedule = std::vector<ScheduleEntry>;

class Registry;  // store.hpp

struct MmpdPolicyReport {
  std::string id;
  bool skipped = false;  // already registered with a matching config hash
  TrainReport train;
  std::vector<KnownDisagreement> disagreement;
};

struct MmpdRunResult {
  std::vector<KnownPolicy> policies;  // schedule order
  std::vector<MmpdPolicyReport> reports;
};

// Trains one registered policy, or loads it when the registry already has
// this id with a matching config hash. A same-id entry with a different
// hash is a ConfigError. Helper shared by run_mmpd and the CLI training
// commands.
KnownPolicy train_and_register_policy(
    Registry& registry, const std::string& id, const AgentSelection& agents,
    const std::vector<KnownPolicy>& known, const SacConfig& sac,
    const ArenaConfig& arena, const PenaltyConfig& penalty,
    std::uint64_t master_seed, const ActionMask& mask,
    MmpdPolicyReport* report_out = nullptr);

// Runs the whole schedule: validates every entry up front (unique ids,
// resolvable known references), then trains or loads each policy in order.
// Fully resumable: completed entries are skipped by id + config hash.
MmpdRunResult run_mmpd(const DiversitySchedule& schedule, const SacConfig& sac,
                       const ArenaConfig& arena, const PenaltyConfig& penalty,
                       std::uint64_t seed, Registry& registry);

}  // namespace mmpd
