#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mmpd/errors.hpp"
#include "mmpd/rollout.hpp"
#include "mmpd/trainer.hpp"

using namespace mmpd;

namespace {

// Small everything: these tests exercise the loop mechanics, not learning.
SacConfig loop_sac() {
  SacConfig cfg;
  cfg.hidden_sizes = {8};
  cfg.batch_size = 16;
  cfg.replay_capacity = 2000;
  cfg.warmup_steps = 40;
  cfg.eval_every_steps = 150;
  cfg.eval_episodes = 2;
  return cfg;
}

ArenaConfig loop_arena() {
  ArenaConfig cfg;
  cfg.max_ticks = 25;
  return cfg;
}

bool same_nets(const PolicyParams& a, const PolicyParams& b) {
  for (int k = 0; k < kNumAgents; ++k) {
    if (!(a.agents[k].actor == b.agents[k].actor)) return false;
    if (!(a.agents[k].q1 == b.agents[k].q1)) return false;
    if (!(a.agents[k].q2 == b.agents[k].q2)) return false;
    if (!(a.agents[k].q1_target == b.agents[k].q1_target)) return false;
    if (!(a.agents[k].q2_target == b.agents[k].q2_target)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("training is bit-identical for a fixed seed") {
  const SacConfig sac = loop_sac();
  const ArenaConfig arena = loop_arena();

  const TrainResult a = train_baseline(sac, arena, 11, 300);
  const TrainResult b = train_baseline(sac, arena, 11, 300);
  CHECK(same_nets(a.params, b.params));
  CHECK(a.report.episodes == b.report.episodes);
  CHECK(a.report.evals == b.report.evals);
  CHECK(a.report.steps_done == 300);
  CHECK(a.report.fresh_inserted == 300);
  CHECK(a.report.relabeled_inserted == 0);
  CHECK(!a.report.episodes.empty());

  // Updates after warmup must actually move the parameters.
  const PolicyParams init = init_policy(sac, derive_seed(11, 1));
  CHECK_FALSE(same_nets(a.params, init));

  const TrainResult c = train_baseline(sac, arena, 12, 300);
  CHECK_FALSE(same_nets(a.params, c.params));
}

TEST_CASE("a zero step budget returns the untouched initial policy") {
  const SacConfig sac = loop_sac();
  const TrainResult r = train_baseline(sac, loop_arena(), 21, 0);
  CHECK(same_nets(r.params, init_policy(sac, derive_seed(21, 1))));
  CHECK(r.report.steps_done == 0);
  CHECK(r.report.episodes.empty());
  CHECK(r.report.evals.empty());
  CHECK(r.report.final_win_rate == -1.0);
  CHECK_FALSE(r.report.early_stopped);
}

TEST_CASE("an all-warmup run collects data but never updates") {
  SacConfig sac = loop_sac();
  sac.warmup_steps = 200;
  const TrainResult r = train_baseline(sac, loop_arena(), 31, 200);
  CHECK(same_nets(r.params, init_policy(sac, derive_seed(31, 1))));
  CHECK(r.report.fresh_inserted == 200);
  // The final evaluation still runs at the last step.
  REQUIRE(!r.report.evals.empty());
  CHECK(r.report.evals.back().step == 200);
  CHECK(r.report.final_win_rate >= 0.0);
}

TEST_CASE("episode stats partition the step budget") {
  const TrainResult r = train_baseline(loop_sac(), loop_arena(), 41, 400);
  long ticks = 0;
  long prev_end = 0;
  for (const EpisodeStat& e : r.report.episodes) {
    CHECK(e.ticks >= 1);
    CHECK(e.ticks <= 25);
    CHECK(e.outcome != Outcome::Ongoing);
    CHECK(e.step_end == prev_end + e.ticks);
    prev_end = e.step_end;
    ticks += e.ticks;
  }
  CHECK(ticks <= 400);
  CHECK(400 - ticks < 25);  // at most one unfinished episode remains
}

TEST_CASE("the round hook feeds extra transitions into the replay") {
  const SacConfig sac = loop_sac();
  const ArenaConfig arena = loop_arena();

  int calls = 0;
  const RoundHook hook = [&](const PolicyParams& params) {
    ++calls;
    // The hook sees the live parameters.
    CHECK(params.agents[0].actor.output_size() == kNumActions);
    std::vector<Transition> extra(3);
    for (Transition& t : extra) {
      t.state.assign(kObservationSize, 0.0);
      t.next_state.assign(kObservationSize, 0.0);
      t.actions = {0, 0};
      t.reward = -1.0;
    }
    return extra;
  };

  const TrainResult r = run_training_loop(sac, arena, 51, 200,
                                          all_actions_allowed(), 50, hook);
  CHECK(calls == 4);
  CHECK(r.report.relabeled_inserted == 12);
  CHECK(r.report.fresh_inserted == 200);

  // Disabled hook plumbing behaves exactly like train_baseline.
  const TrainResult plain = run_training_loop(sac, arena, 51, 200,
                                              all_actions_allowed(), 0, nullptr);
  const TrainResult base = train_baseline(sac, arena, 51, 200);
  CHECK(same_nets(plain.params, base.params));
  CHECK(plain.report.episodes == base.report.episodes);
}

TEST_CASE("early stopping halts at the first qualifying evaluation") {
  // A one-hp red with a huge gun range makes spawn-state firing an instant
  // win, so even an untrained greedy policy can clear the bar for some init
  // seed; scan a few to find one whose greedy spawn action is FireGun.
  ArenaConfig arena = loop_arena();
  arena.red_hp = 1;
  arena.gun_range_m = 100.0;

  SacConfig sac = loop_sac();
  sac.warmup_steps = 500;  // never updates; the init policy is evaluated
  sac.eval_every_steps = 40;
  sac.early_stop_win_rate = 0.9;

  bool stopped = false;
  for (std::uint64_t seed = 0; seed < 40 && !stopped; ++seed) {
    const TrainResult r = train_baseline(sac, arena, seed, 400);
    if (r.report.early_stopped) {
      stopped = true;
      CHECK(r.report.steps_done == 40);
      CHECK(r.report.evals.size() == 1);
      CHECK(r.report.evals[0].win_rate >= 0.9);
      CHECK(r.report.final_win_rate >= 0.9);
    } else {
      CHECK(r.report.steps_done == 400);
    }
  }
  CHECK(stopped);
}

TEST_CASE("masked training keeps greedy play inside the mask") {
  ActionMask mask = all_actions_allowed();
  mask[int(WhiteAction::FireGun)] = false;
  mask[int(WhiteAction::FireBomb)] = false;

  const TrainResult r =
      train_baseline(loop_sac(), loop_arena(), 61, 300, mask);
  const EpisodeRollout ep =
      run_episode(r.params, loop_arena(), 1234, ActMode::Greedy);
  for (const TickRecord& t : ep.log.ticks) {
    for (int k = 0; k < kNumAgents; ++k) {
      CHECK(mask[t.actions[k]]);
    }
  }

  const ActionMask none{};
  CHECK_THROWS_AS(train_baseline(loop_sac(), loop_arena(), 61, 100, none),
                  ConfigError);
}

TEST_CASE("invalid configurations are rejected up front") {
  SacConfig bad_sac = loop_sac();
  bad_sac.gamma = 1.0;
  CHECK_THROWS_AS(train_baseline(bad_sac, loop_arena(), 1, 10), ConfigError);

  ArenaConfig bad_arena = loop_arena();
  bad_arena.red_hp = 0;
  CHECK_THROWS_AS(train_baseline(loop_sac(), bad_arena, 1, 10), ConfigError);
}
