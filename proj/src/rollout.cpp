#include "mmpd/rollout.hpp"

#include <utility>

#include "mmpd/errors.hpp"

namespace mmpd {

EpisodeRollout run_episode(const PolicyParams& params, const ArenaConfig& arena,
                           std::uint64_t seed, ActMode mode, Rng* action_rng) {
  EpisodeRollout out;
  out.log.seed = seed;

  WorldState state = reset(arena, seed);
  std::vector<double> obs = observe(state, arena);
  while (!is_terminal(state, arena)) {
    std::array<WhiteAction, kNumAgents> actions{};
    std::array<int, kNumAgents> action_ints{};
    for (int k = 0; k < kNumAgents; ++k) {
      action_ints[k] = act(params, k, obs, mode, action_rng);
      actions[k] = static_cast<WhiteAction>(action_ints[k]);
    }

    StepResult result = step(state, actions, arena);

    TickRecord rec;
    rec.tick = state.tick;
    for (int k = 0; k < kNumAgents; ++k) {
      rec.white_pos[k] = state.white[k].pos;
      rec.white_hp[k] = state.white[k].hp;
      rec.white_alive[k] = state.white[k].alive;
    }
    rec.actions = action_ints;
    rec.red_heading_deg = state.red.heading_deg;
    rec.red_hp = state.red.hp;
    rec.reward = result.reward;
    rec.events = result.events;
    out.log.ticks.push_back(std::move(rec));
    out.log.episode_return += result.reward;

    Transition tr;
    tr.state = obs;
    tr.actions = action_ints;
    tr.reward = result.reward;
    tr.next_state = observe(result.next, arena);
    tr.done = result.done;
    obs = tr.next_state;
    out.transitions.push_back(std::move(tr));

    state = std::move(result.next);
  }
  out.log.final_state = std::move(state);
  out.log.outcome = outcome_of(out.log.final_state, arena);
  return out;
}

std::vector<Vec2> agent_trajectory(const EpisodeLog& log, int agent) {
  if (agent < 0 || agent >= kNumAgents) {
    throw UsageError("agent_trajectory: agent index out of range");
  }
  std::vector<Vec2> points;
  points.reserve(log.ticks.size() + 1);
  for (const TickRecord& rec : log.ticks) {
    points.push_back(rec.white_pos[agent]);
  }
  points.push_back(log.final_state.white[agent].pos);
  return points;
}

EvalReport evaluate(const PolicyParams& params, const ArenaConfig& arena,
                    int episodes, std::uint64_t seed) {
  if (episodes < 1) throw UsageError("evaluate: episodes must be >= 1");
  EvalReport report;
  report.episodes = episodes;
  double total_ticks = 0.0;
  for (int i = 0; i < episodes; ++i) {
    EpisodeRollout ep = run_episode(params, arena, derive_seed(seed, i),
                                    ActMode::Greedy);
    if (ep.log.outcome == Outcome::Win) ++report.wins;
    report.mean_return += ep.log.episode_return;
    total_ticks += static_cast<double>(ep.log.ticks.size());
  }
  report.win_rate = static_cast<double>(report.wins) / episodes;
  report.mean_return /= episodes;
  report.mean_ticks = total_ticks / episodes;
  return report;
}

}  // namespace mmpd
