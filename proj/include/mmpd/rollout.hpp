#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mmpd/arena.hpp"
#include "mmpd/sac.hpp"

namespace mmpd {

// Everything observable about one tick, captured before the step resolves.
struct TickRecord {
  int tick = 0;
  std::array<Vec2, kNumAgents> white_pos;
  std::array<int, kNumAgents> white_hp{};
  std::array<bool, kNumAgents> white_alive{};
  std::array<int, kNumAgents> actions{};
  double red_heading_deg = 0.0;
  int red_hp = 0;
  double reward = 0.0;
  std::vector<AttackEvent> events;
  bool operator==(const TickRecord&) const = default;
};

struct EpisodeLog {
  std::uint64_t seed = 0;
  std::vector<TickRecord> ticks;
  WorldState final_state;
  Outcome outcome = Outcome::Ongoing;
  double episode_return = 0.0;
  bool operator==(const EpisodeLog&) const = default;
};

// Log plus the same episode as replay-ready transitions (one per tick).
struct EpisodeRollout {
  EpisodeLog log;
  std::vector<Transition> transitions;
};

// Plays one full episode. Sample mode draws actions from action_rng;
// Greedy needs none. The world's own randomness comes from `seed` alone.
EpisodeRollout run_episode(const PolicyParams& params, const ArenaConfig& arena,
                           std::uint64_t seed, ActMode mode,
                           Rng* action_rng = nullptr);

// Agent positions over the episode: one point per tick plus the final
// position (length ticks + 1). Dead agents keep their last position.
std::vector<Vec2> agent_trajectory(const EpisodeLog& log, int agent);

struct EvalReport {
  int episodes = 0;
  int wins = 0;
  double win_rate = 0.0;
  double mean_return = 0.0;
  double mean_ticks = 0.0;
};

// Greedy evaluation over `episodes` episodes; episode i resets with
// derive_seed(seed, i), so two policies evaluated with the same seed see
// identical spawns.
EvalReport evaluate(const PolicyParams& params, const ArenaConfig& arena,
                    int episodes, std::uint64_t seed);

}  // namespace mmpd
