#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mmpd/arena.hpp"
#include "mmpd/rollout.hpp"
#include "mmpd/sac.hpp"

namespace mmpd {

struct EpisodeStat {
  long step_end = 0;  // global env-step count when the episode finished
  double episode_return = 0.0;
  Outcome outcome = Outcome::Ongoing;
  int ticks = 0;
  bool operator==(const EpisodeStat&) const = default;
};

struct EvalPoint {
  long step = 0;
  double win_rate = 0.0;
  double mean_return = 0.0;
  bool operator==(const EvalPoint&) const = default;
};

struct TrainReport {
  std::vector<EpisodeStat> episodes;  // training curve, one entry per episode
  std::vector<EvalPoint> evals;
  long steps_done = 0;
  bool early_stopped = false;
  double final_win_rate = -1.0;  // -1 when never evaluated (zero budget)
  double final_mean_return = 0.0;
  long fresh_inserted = 0;
  long relabeled_inserted = 0;
};

struct TrainResult {
  PolicyParams params;
  TrainReport report;
};

// Called at every round boundary with the current params; returns
// transitions to mix into the replay buffer. Drives penalty relabeling.
using RoundHook = std::function<std::vector<Transition>(const PolicyParams&)>;

// Core off-policy loop: sampled-action rollouts pushed into a replay ring
// (uniform random actions during warmup), SAC updates for both agents every
// steps_per_update after warmup, periodic greedy evaluation with optional
// early stopping. round_len_steps <= 0 or a null hook disables the round
// hook entirely, which makes the loop identical to plain task training.
TrainResult run_training_loop(const SacConfig& sac, const ArenaConfig& arena,
                              std::uint64_t seed, long step_budget,
                              const ActionMask& mask, long round_len_steps = 0,
                              const RoundHook& hook = nullptr);

// Plain task training: no known policies, no penalty rounds.
TrainResult train_baseline(const SacConfig& sac, const ArenaConfig& arena,
                           std::uint64_t seed, long step_budget,
                           const ActionMask& mask = all_actions_allowed());

}  // namespace mmpd
