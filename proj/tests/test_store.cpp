#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "mmpd/diversity.hpp"
#include "mmpd/errors.hpp"
#include "mmpd/rollout.hpp"
#include "mmpd/store.hpp"

using namespace mmpd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("mmpd_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

SacConfig tiny_sac() {
  SacConfig cfg;
  cfg.hidden_sizes = {6};
  return cfg;
}

ArenaConfig short_arena() {
  ArenaConfig cfg;
  cfg.max_ticks = 30;
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

bool same_transition(const Transition& a, const Transition& b) {
  return a.state == b.state && a.actions == b.actions && a.reward == b.reward &&
         a.next_state == b.next_state && a.done == b.done;
}

}  // namespace

TEST_CASE("atomic text files round-trip without leftovers") {
  TempDir tmp("atomic");
  const fs::path f = tmp.path / "x.json";
  write_text_file_atomic(f, "hello\nworld");
  CHECK(read_text_file(f) == "hello\nworld");
  CHECK_FALSE(fs::exists(tmp.path / "x.json.tmp"));

  write_text_file_atomic(f, "shorter");
  CHECK(read_text_file(f) == "shorter");

  CHECK_THROWS_AS(read_text_file(tmp.path / "missing.json"), IoError);
}

TEST_CASE("json parse failures carry context and position") {
  CHECK_THROWS_AS(parse_json_text("{ \"a\": 1, }", "cfg"), ParseError);
  try {
    parse_json_text("{ \"a\": 1, }", "cfg");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cfg") != std::string::npos);
    CHECK(msg.find("parse error") != std::string::npos);
  }
  CHECK(parse_json_text("[1, 2]", "ok").is_array());
}

TEST_CASE("format version gate accepts 1 and rejects everything else") {
  json good{{"format_version", kFormatVersion}};
  CHECK_NOTHROW(require_format_version(good, "t"));
  CHECK_THROWS_AS(require_format_version(json{{"x", 1}}, "t"), VersionError);
  CHECK_THROWS_AS(require_format_version(json{{"format_version", 2}}, "t"),
                  VersionError);
  CHECK_THROWS_AS(require_format_version(json{{"format_version", "1"}}, "t"),
                  VersionError);
  CHECK_THROWS_AS(require_format_version(json::array(), "t"), ParseError);
}

TEST_CASE("fnv1a64 matches published vectors and hashes are canonical") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);

  // nlohmann sorts object keys, so insertion order cannot change the hash.
  const json a{{"x", 1}, {"y", 2}};
  const json b{{"y", 2}, {"x", 1}};
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a) != config_hash(json{{"x", 1}, {"y", 3}}));
}

TEST_CASE("experiment config round-trips through json") {
  const ExperimentConfig def = default_experiment_config();
  const ExperimentConfig back = experiment_config_from_json(to_json(def));
  CHECK(to_json(back).dump() == to_json(def).dump());

  // Partial overrides keep the other defaults.
  const ExperimentConfig partial = experiment_config_from_json(
      json{{"sac", json{{"gamma", 0.9}}}});
  CHECK(partial.sac.gamma == 0.9);
  CHECK(partial.sac.batch_size == def.sac.batch_size);
  CHECK(partial.arena.red_hp == def.arena.red_hp);
}

TEST_CASE("experiment config errors are aggregated") {
  const json bad{{"arena", json{{"gun_range_m", -2.0}, {"mystery", 1}}},
                 {"sac", json{{"gamma", 1.5}, {"tau", 0.0}}},
                 {"penalty", json{{"mixing_ratio", -1.0}}}};
  try {
    experiment_config_from_json(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("gamma") != std::string::npos);
    CHECK(msg.find("tau") != std::string::npos);
    CHECK(msg.find("gun_range_m") != std::string::npos);
    CHECK(msg.find("mystery") != std::string::npos);
    CHECK(msg.find("mixing_ratio") != std::string::npos);
  }

  CHECK_THROWS_AS(experiment_config_from_json(json::array()), ConfigError);
  CHECK_THROWS_AS(
      experiment_config_from_json(json{{"format_version", 99}}), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json(json{{"typo", 1}}), ConfigError);
}

TEST_CASE("schedules parse, default their ids and reject duplicates") {
  const json plain = json::array(
      {json{{"agents", json::array({1})}, {"known", json::array({"base"})}},
       json{{"id", "second"}, {"agents", json::array({0, 1})}}});
  const DiversitySchedule s = schedule_from_json(plain);
  REQUIRE(s.size() == 2);
  CHECK(s[0].id == "policy_0");
  CHECK(s[0].agents == AgentSelection{1});
  CHECK(s[0].known == std::vector<std::string>{"base"});
  CHECK(s[1].id == "second");
  CHECK(s[1].known.empty());

  const json dup = json::array({json{{"id", "x"}}, json{{"id", "x"}}});
  CHECK_THROWS_AS(schedule_from_json(dup), ConfigError);
  CHECK_THROWS_AS(schedule_from_json(json{{"id", "x"}}), ConfigError);
  CHECK_THROWS_AS(
      schedule_from_json(json::array({json{{"id", "bad/slash"}}})),
      ConfigError);

  TempDir tmp("sched");
  const fs::path f = tmp.path / "schedule.json";
  write_text_file_atomic(f, plain.dump());
  CHECK(load_schedule(f).size() == 2);
}

TEST_CASE("checkpoints round-trip bit-exact") {
  TempDir tmp("ckpt");
  SacConfig cfg = tiny_sac();
  cfg.gamma = 0.93;
  cfg.alpha = 0.07;
  ActionMask mask = all_actions_allowed();
  mask[int(WhiteAction::FireBomb)] = false;
  PolicyParams params = init_policy(cfg, 4242, mask);

  const fs::path f = tmp.path / "p.ckpt.json";
  save_checkpoint(params, f);
  const PolicyParams back = load_checkpoint(f);
  CHECK(same_nets(params, back));
  CHECK(back.alpha == params.alpha);
  CHECK(back.action_mask == mask);
  CHECK(back.config == cfg);

  PolicyParams poisoned = params;
  poisoned.agents[0].q1.weights[0][3] =
      std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(save_checkpoint(poisoned, tmp.path / "bad.json"), UsageError);
}

TEST_CASE("checkpoint loader rejects tampered files") {
  TempDir tmp("ckpt_bad");
  const PolicyParams params = init_policy(tiny_sac(), 7);
  const fs::path f = tmp.path / "p.ckpt.json";
  save_checkpoint(params, f);

  json j = parse_json_text(read_text_file(f), "t");

  json no_version = j;
  no_version.erase("format_version");
  write_text_file_atomic(f, no_version.dump());
  CHECK_THROWS_AS(load_checkpoint(f), VersionError);

  json wrong_version = j;
  wrong_version["format_version"] = 3;
  write_text_file_atomic(f, wrong_version.dump());
  CHECK_THROWS_AS(load_checkpoint(f), VersionError);

  json extra = j;
  extra["surprise"] = 1;
  write_text_file_atomic(f, extra.dump());
  CHECK_THROWS_AS(load_checkpoint(f), ParseError);

  json bad_alpha = j;
  bad_alpha["alpha"] = -1.0;
  write_text_file_atomic(f, bad_alpha.dump());
  CHECK_THROWS_AS(load_checkpoint(f), ParseError);

  json no_actions = j;
  no_actions["action_mask"] = json::array({false, false, false, false, false,
                                           false, false});
  write_text_file_atomic(f, no_actions.dump());
  CHECK_THROWS_AS(load_checkpoint(f), ParseError);

  json bad_shape = j;
  bad_shape["agents"][0]["q1"]["weights"][0].erase(0);
  write_text_file_atomic(f, bad_shape.dump());
  CHECK_THROWS_AS(load_checkpoint(f), ParseError);

  json missing_net = j;
  missing_net["agents"][1].erase("q2_target");
  write_text_file_atomic(f, missing_net.dump());
  CHECK_THROWS_AS(load_checkpoint(f), ParseError);

  write_text_file_atomic(f, "{ not json");
  CHECK_THROWS_AS(load_checkpoint(f), ParseError);
}

TEST_CASE("demonstration files round-trip episode by episode") {
  TempDir tmp("demos");
  const ArenaConfig arena = short_arena();
  const PolicyParams params = init_policy(tiny_sac(), 11);
  const DemonstrationSet demos = collect_demonstrations(params, arena, 2, 321);
  REQUIRE(demos.episodes.size() == 2);

  const fs::path f = tmp.path / "d.jsonl";
  save_demonstrations(demos, f);
  const DemonstrationSet back = load_demonstrations(f);
  CHECK(back.seed == demos.seed);
  REQUIRE(back.episodes.size() == demos.episodes.size());
  for (std::size_t i = 0; i < demos.episodes.size(); ++i) {
    const EpisodeRollout& a = demos.episodes[i];
    const EpisodeRollout& b = back.episodes[i];
    CHECK(b.log.seed == a.log.seed);
    CHECK(b.log.outcome == a.log.outcome);
    CHECK(b.log.episode_return == a.log.episode_return);
    REQUIRE(b.transitions.size() == a.transitions.size());
    for (std::size_t t = 0; t < a.transitions.size(); ++t) {
      CHECK(same_transition(a.transitions[t], b.transitions[t]));
    }
  }
  CHECK(back.flat().size() == demos.transition_count());

  // A corrupt action on line 2 is reported with its line number.
  std::string text = read_text_file(f);
  const std::size_t line2 = text.find('\n') + 1;
  std::string tampered = text;
  const std::size_t apos = tampered.find("\"a\":[", line2);
  REQUIRE(apos != std::string::npos);
  tampered[apos + 5] = '9';
  write_text_file_atomic(f, tampered);
  try {
    load_demonstrations(f);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("trajectory logs append and reload everything but the rng") {
  TempDir tmp("traj");
  const ArenaConfig arena = short_arena();
  const PolicyParams params = init_policy(tiny_sac(), 13);
  const EpisodeRollout e1 = run_episode(params, arena, 501, ActMode::Greedy);
  const EpisodeRollout e2 = run_episode(params, arena, 502, ActMode::Greedy);

  const fs::path f = tmp.path / "t.jsonl";
  append_trajectory(e1.log, f);
  append_trajectories(std::array{e2.log}, f);
  const std::vector<EpisodeLog> back = load_trajectories(f);
  REQUIRE(back.size() == 2);

  for (std::size_t i = 0; i < 2; ++i) {
    const EpisodeLog& a = i == 0 ? e1.log : e2.log;
    const EpisodeLog& b = back[i];
    CHECK(b.seed == a.seed);
    CHECK(b.outcome == a.outcome);
    CHECK(b.episode_return == a.episode_return);
    CHECK(b.ticks == a.ticks);
    CHECK(b.final_state.tick == a.final_state.tick);
    for (int k = 0; k < kNumAgents; ++k) {
      CHECK(b.final_state.white[k].pos.x == a.final_state.white[k].pos.x);
      CHECK(b.final_state.white[k].hp == a.final_state.white[k].hp);
      CHECK(b.final_state.white[k].gun_cd == a.final_state.white[k].gun_cd);
    }
    CHECK(b.final_state.red.heading_deg == a.final_state.red.heading_deg);
    CHECK(b.final_state.red.hp == a.final_state.red.hp);
    CHECK(b.final_state.red.fire_cd == a.final_state.red.fire_cd);
  }

  // Appending nothing leaves the file alone.
  append_trajectories({}, f);
  CHECK(load_trajectories(f).size() == 2);
}

TEST_CASE("policy ids restrict to registry-safe names") {
  CHECK(valid_policy_id("baseline"));
  CHECK(valid_policy_id("mmpd-L1_seed.3"));
  CHECK(valid_policy_id("A"));
  CHECK_FALSE(valid_policy_id(""));
  CHECK_FALSE(valid_policy_id(".hidden"));
  CHECK_FALSE(valid_policy_id("a/b"));
  CHECK_FALSE(valid_policy_id("a b"));
  CHECK_FALSE(valid_policy_id("caf\xc3\xa9"));
  CHECK_FALSE(valid_policy_id(std::string(65, 'x')));
}

TEST_CASE("registry stores, reloads and guards policies") {
  TempDir tmp("reg");
  const ArenaConfig arena = short_arena();
  const PolicyParams params = init_policy(tiny_sac(), 21);
  const DemonstrationSet demos = collect_demonstrations(params, arena, 2, 77);
  const json report{{"note", "unit"}};

  {
    Registry reg(tmp.path / "exp");
    CHECK_FALSE(reg.has("pol-a"));
    CHECK(reg.ids().empty());
    CHECK_THROWS_AS(reg.entry("pol-a"), UsageError);

    reg.add_policy("pol-a", params, demos, report, 909, "deadbeefdeadbeef",
                   {1}, {"base"}, 4000);
    CHECK(reg.has("pol-a"));
    const RegistryEntry& e = reg.entry("pol-a");
    CHECK(e.seed == 909);
    CHECK(e.config_hash == "deadbeefdeadbeef");
    CHECK(e.agents == AgentSelection{1});
    CHECK(e.known == std::vector<std::string>{"base"});
    CHECK(e.train_steps == 4000);
    CHECK(fs::exists(reg.file_path(e.checkpoint_file)));
    CHECK(fs::exists(reg.file_path(e.demos_file)));
    CHECK(fs::exists(reg.file_path(e.trajectories_file)));
    CHECK(fs::exists(reg.file_path(e.report_file)));

    CHECK_THROWS_AS(reg.add_policy("pol-a", params, demos, report, 1, "h", {},
                                   {}, 1),
                    UsageError);
    CHECK_THROWS_AS(reg.add_policy("bad/id", params, demos, report, 1, "h", {},
                                   {}, 1),
                    ConfigError);
  }

  // A fresh instance reloads the index from disk.
  {
    Registry reg(tmp.path / "exp");
    CHECK(reg.ids() == std::vector<std::string>{"pol-a"});
    const KnownPolicy k = reg.load_policy("pol-a");
    CHECK(k.id == "pol-a");
    CHECK(same_nets(k.params, params));
    CHECK(k.demos.size() == demos.transition_count());
    CHECK(k.demo_seed == 77);
    CHECK(k.demo_episodes == 2);
    CHECK(reg.load_report("pol-a").at("note") == "unit");
    CHECK(reg.load_policy_trajectories("pol-a").size() == 2);
  }

  // Index entries that point at missing files are an error at open time.
  fs::remove(tmp.path / "exp" / "pol-a.ckpt.json");
  CHECK_THROWS_AS(Registry(tmp.path / "exp"), IoError);
}

TEST_CASE("registry rejects corrupt index files") {
  TempDir tmp("reg_bad");
  fs::create_directories(tmp.path / "exp");
  write_text_file_atomic(tmp.path / "exp" / "registry.json", "{ nope");
  CHECK_THROWS_AS(Registry(tmp.path / "exp"), ParseError);

  write_text_file_atomic(tmp.path / "exp" / "registry.json",
                         json{{"format_version", 9}, {"policies", json::object()}}
                             .dump());
  CHECK_THROWS_AS(Registry(tmp.path / "exp"), VersionError);
}

TEST_CASE("report serializers expose the expected fields") {
  EvalReport ev;
  ev.episodes = 10;
  ev.wins = 7;
  ev.win_rate = 0.7;
  ev.mean_return = 3.5;
  ev.mean_ticks = 42.0;
  const json ej = eval_report_json(ev);
  CHECK(ej.at("episodes") == 10);
  CHECK(ej.at("wins") == 7);
  CHECK(ej.at("win_rate") == 0.7);

  TrainReport tr;
  tr.steps_done = 1000;
  tr.early_stopped = true;
  tr.final_win_rate = 0.9;
  tr.evals.push_back(EvalPoint{500, 0.4, -1.0});
  tr.episodes.push_back(EpisodeStat{120, 2.5, Outcome::Win, 30});
  KnownDisagreement kd;
  kd.known_id = "base";
  kd.rates.push_back(AgentRate{1, 0.85});
  const json tj = train_report_json(tr, {kd});
  CHECK(tj.at("steps_done") == 1000);
  CHECK(tj.at("early_stopped") == true);
  CHECK(tj.at("evals").size() == 1);
  CHECK(tj.at("evals")[0].at("win_rate") == 0.4);
  CHECK(tj.at("episodes")[0].at("outcome") == "win");
  CHECK(tj.at("disagreement")[0].at("known_id") == "base");
  CHECK(tj.at("disagreement")[0].at("rates")[0].at("rate") == 0.85);

  ComparisonReport cr;
  cr.id_a = "a";
  cr.id_b = "b";
  cr.episodes = 5;
  cr.seed = 99;
  cr.mean_frechet = {1.5, 2.5};
  cr.disagreement = {0.25, 0.75};
  cr.mmd.mmd = 0.5;
  cr.mmd.sigma = 2.0;
  const json cj = comparison_report_json(cr);
  CHECK(cj.at("policy_a") == "a");
  CHECK(cj.at("mean_frechet")[1] == 2.5);
  CHECK(cj.at("mmd").at("value") == 0.5);

  const std::string csv = comparison_report_csv(cr);
  CHECK(csv.find("policy_a,policy_b,agent,") == 0);
  CHECK(csv.find("a,b,0,1.5,0.25,0.5,2,5") != std::string::npos);
  CHECK(csv.find("a,b,1,2.5,0.75,0.5,2,5") != std::string::npos);
}
