#include "mmpd/trainer.hpp"

#include <utility>

#include "mmpd/errors.hpp"
#include "mmpd/log.hpp"

namespace mmpd {

namespace {

// Independent RNG streams per training run; keep stable, they pin
// reproducibility of every published run.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamAction = 2;
constexpr std::uint64_t kStreamBatch = 3;
constexpr std::uint64_t kStreamEpisode = 4;
constexpr std::uint64_t kStreamEval = 5;

}  // namespace

TrainResult run_training_loop(const SacConfig& sac, const ArenaConfig& arena,
                              std::uint64_t seed, long step_budget,
                              const ActionMask& mask, long round_len_steps,
                              const RoundHook& hook) {
  sac.validate();
  arena.validate();

  TrainResult result;
  result.params = init_policy(sac, derive_seed(seed, kStreamInit), mask);
  if (step_budget <= 0) return result;

  PolicyParams& params = result.params;
  TrainReport& report = result.report;

  ReplayBuffer buffer(static_cast<std::size_t>(sac.replay_capacity));
  OptimizerState opt = make_optimizer_state(params);
  OptimizerState* opt_ptr = sac.optimizer == "adam" ? &opt : nullptr;

  Rng action_rng(derive_seed(seed, kStreamAction));
  Rng batch_rng(derive_seed(seed, kStreamBatch));
  const std::uint64_t episode_seed_base = derive_seed(seed, kStreamEpisode);
  const std::uint64_t eval_seed = derive_seed(seed, kStreamEval);

  std::vector<int> allowed;
  for (int a = 0; a < kNumActions; ++a) {
    if (mask[a]) allowed.push_back(a);
  }
  if (allowed.empty()) throw ConfigError("action mask allows no action");

  long episode_index = 0;
  WorldState state = reset(arena, derive_seed(episode_seed_base, episode_index));
  std::vector<double> obs = observe(state, arena);
  double ep_return = 0.0;
  int ep_ticks = 0;

  std::vector<Transition> batch;
  bool stop = false;
  for (long t = 1; t <= step_budget && !stop; ++t) {
    std::array<WhiteAction, kNumAgents> actions{};
    std::array<int, kNumAgents> action_ints{};
    for (int k = 0; k < kNumAgents; ++k) {
      int a;
      if (t <= sac.warmup_steps) {
        a = allowed[action_rng.uniform_int(static_cast<int>(allowed.size()))];
      } else {
        a = act(params, k, obs, ActMode::Sample, &action_rng);
      }
      action_ints[k] = a;
      actions[k] = static_cast<WhiteAction>(a);
    }

    StepResult sr = step(state, actions, arena);
    Transition tr;
    tr.state = std::move(obs);
    tr.actions = action_ints;
    tr.reward = sr.reward;
    tr.next_state = observe(sr.next, arena);
    tr.done = sr.done;
    obs = tr.next_state;
    buffer.push(std::move(tr));
    ++report.fresh_inserted;
    ep_return += sr.reward;
    ++ep_ticks;
    state = std::move(sr.next);

    if (sr.done) {
      report.episodes.push_back({t, ep_return, sr.outcome, ep_ticks});
      ++episode_index;
      state = reset(arena, derive_seed(episode_seed_base, episode_index));
      obs = observe(state, arena);
      ep_return = 0.0;
      ep_ticks = 0;
    }

    if (round_len_steps > 0 && hook && t % round_len_steps == 0) {
      std::vector<Transition> mixed = hook(params);
      report.relabeled_inserted += static_cast<long>(mixed.size());
      for (Transition& m : mixed) buffer.push(std::move(m));
    }

    if (t > sac.warmup_steps && t % sac.steps_per_update == 0) {
      for (int u = 0; u < sac.updates_per_round; ++u) {
        buffer.sample_into(sac.batch_size, batch_rng, batch);
        sac_update(params, batch, 0, opt_ptr);
        sac_update(params, batch, 1, opt_ptr);
      }
    }

    if (t % sac.eval_every_steps == 0 || t == step_budget) {
      const EvalReport ev = evaluate(params, arena, sac.eval_episodes, eval_seed);
      report.evals.push_back({t, ev.win_rate, ev.mean_return});
      report.final_win_rate = ev.win_rate;
      report.final_mean_return = ev.mean_return;
      log_info("train step=", t, " win_rate=", ev.win_rate,
               " mean_return=", ev.mean_return,
               " episodes=", report.episodes.size());
      if (sac.early_stop_win_rate > 0.0 &&
          ev.win_rate >= sac.early_stop_win_rate) {
        report.early_stopped = true;
        stop = true;
        log_info("early stop at step ", t, ": win_rate ", ev.win_rate,
                 " >= ", sac.early_stop_win_rate);
      }
    }
    report.steps_done = t;
  }
  return result;
}

TrainResult train_baseline(const SacConfig& sac, const ArenaConfig& arena,
                           std::uint64_t seed, long step_budget,
                           const ActionMask& mask) {
  return run_training_loop(sac, arena, seed, step_budget, mask);
}

}  // namespace mmpd
