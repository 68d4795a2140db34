#include "mmpd/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmpd/diversity.hpp"
#include "mmpd/errors.hpp"
#include "mmpd/log.hpp"
#include "mmpd/metrics.hpp"
#include "mmpd/rollout.hpp"
#include "mmpd/store.hpp"
#include "mmpd/trainer.hpp"

#ifndef MMPD_BUILD_ID
#define MMPD_BUILD_ID "unknown"
#endif

namespace mmpd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOptions {
  std::string config_path;
  std::string registry_path = "registry";
  std::uint64_t seed = 42;
  int episodes = 0;  // 0 -> config default
  long steps = -1;   // <0 -> config default
};

ExperimentConfig load_config_or_defaults(const CliOptions& opt) {
  ExperimentConfig cfg = opt.config_path.empty()
                             ? default_experiment_config()
                             : load_experiment_config(opt.config_path);
  if (opt.steps >= 0) cfg.sac.train_steps = opt.steps;
  cfg.arena.validate();
  cfg.sac.validate();
  cfg.penalty.validate();
  return cfg;
}

void announce(const ExperimentConfig& cfg, std::uint64_t seed) {
  log_info("build ", MMPD_BUILD_ID, " seed ", seed, " config_hash ",
           config_hash(to_json(cfg)));
}

ActionMask mask_for_skill(const std::string& skill) {
  ActionMask mask = all_actions_allowed();
  if (skill == "gun") {
    mask[static_cast<int>(WhiteAction::FireBomb)] = false;
  } else if (skill == "bomb") {
    mask[static_cast<int>(WhiteAction::FireGun)] = false;
  } else {
    throw UsageError("unknown skill '" + skill + "' (expected gun or bomb)");
  }
  return mask;
}

json policy_report_summary(const MmpdPolicyReport& r) {
  json out{{"id", r.id}, {"skipped", r.skipped}};
  if (!r.skipped) out["report"] = train_report_json(r.train, r.disagreement);
  return out;
}

int do_train(const CliOptions& opt, const std::string& id,
             const ActionMask& mask) {
  const ExperimentConfig cfg = load_config_or_defaults(opt);
  announce(cfg, opt.seed);
  Registry registry(opt.registry_path);
  MmpdPolicyReport report;
  train_and_register_policy(registry, id, {}, {}, cfg.sac, cfg.arena,
                            cfg.penalty, opt.seed, mask, &report);
  std::cout << policy_report_summary(report).dump(2) << "\n";
  return 0;
}

int do_diversify(const CliOptions& opt, const std::string& schedule_path) {
  const ExperimentConfig cfg = load_config_or_defaults(opt);
  announce(cfg, opt.seed);
  const DiversitySchedule schedule =
      schedule_path.empty() ? cfg.schedule : load_schedule(schedule_path);
  if (schedule.empty()) {
    throw ConfigError(
        "diversify: schedule is empty (pass a schedule file or a config "
        "whose schedule is non-empty)");
  }
  Registry registry(opt.registry_path);
  const MmpdRunResult result =
      run_mmpd(schedule, cfg.sac, cfg.arena, cfg.penalty, opt.seed, registry);
  json out = json::array();
  for (const MmpdPolicyReport& r : result.reports) {
    out.push_back(policy_report_summary(r));
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int do_eval(const CliOptions& opt, const std::string& id) {
  const ExperimentConfig cfg = load_config_or_defaults(opt);
  announce(cfg, opt.seed);
  Registry registry(opt.registry_path);
  const KnownPolicy policy = registry.load_policy(id);
  const int episodes = opt.episodes > 0 ? opt.episodes : cfg.sac.eval_episodes;
  const EvalReport report = evaluate(policy.params, cfg.arena, episodes,
                                     derive_seed(opt.seed, fnv1a64("eval")));
  json out = eval_report_json(report);
  out["id"] = id;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int do_compare(const CliOptions& opt, const std::string& a,
               const std::string& b) {
  const ExperimentConfig cfg = load_config_or_defaults(opt);
  announce(cfg, opt.seed);
  Registry registry(opt.registry_path);
  const KnownPolicy pa = registry.load_policy(a);
  const KnownPolicy pb = registry.load_policy(b);
  const int episodes = opt.episodes > 0 ? opt.episodes : cfg.sac.eval_episodes;
  const ComparisonReport report = compare_policies(
      pa, pb, cfg.arena, episodes, derive_seed(opt.seed, fnv1a64("compare")));
  const json rj = comparison_report_json(report);
  const std::string stem = "compare/" + a + "__" + b;
  write_text_file_atomic(registry.file_path(stem + ".json"), rj.dump(2) + "\n");
  write_text_file_atomic(registry.file_path(stem + ".csv"),
                         comparison_report_csv(report));
  log_info("wrote ", registry.file_path(stem + ".json").string(), " and .csv");
  std::cout << rj.dump(2) << "\n";
  return 0;
}

// --- plot emission ---

struct PlotSeries {
  std::string policy;
  int agent = 0;
  bool secondary = false;  // second policy of a pair -> translucent strokes
  std::vector<Vec2> points;
  std::vector<int> ticks;
};

struct PlotMarker {
  std::string policy;
  bool secondary = false;
  int shooter = 0;
  int target = 0;
  int tick = 0;
  Weapon weapon = Weapon::Gun;
  int damage = 0;
  Vec2 from;
  Vec2 to;
};

std::string list_indices(std::size_t n) {
  if (n == 0) return "none";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(i);
  }
  return s;
}

// Unit positions after tick i resolved: the next tick record, or the final
// snapshot for the last tick. The red cube never moves.
Vec2 white_pos_after(const EpisodeLog& log, std::size_t i, int agent) {
  if (i + 1 < log.ticks.size()) return log.ticks[i + 1].white_pos[agent];
  return log.final_state.white[agent].pos;
}

void gather_plot_data(const EpisodeLog& log, const std::string& policy,
                      bool secondary, std::vector<PlotSeries>& series,
                      std::vector<PlotMarker>& markers) {
  for (int k = 0; k < kNumAgents; ++k) {
    PlotSeries s;
    s.policy = policy;
    s.agent = k;
    s.secondary = secondary;
    s.points = agent_trajectory(log, k);
    for (const TickRecord& r : log.ticks) s.ticks.push_back(r.tick);
    s.ticks.push_back(log.final_state.tick);
    series.push_back(std::move(s));
  }
  const Vec2 red_pos = log.final_state.red.pos;
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    for (const AttackEvent& ev : log.ticks[i].events) {
      PlotMarker m;
      m.policy = policy;
      m.secondary = secondary;
      m.shooter = ev.shooter;
      m.target = ev.target;
      m.tick = log.ticks[i].tick;
      m.weapon = ev.weapon;
      m.damage = ev.damage;
      m.from = ev.shooter < kNumAgents ? white_pos_after(log, i, ev.shooter)
                                       : red_pos;
      m.to = ev.target < kNumAgents ? white_pos_after(log, i, ev.target)
                                    : red_pos;
      markers.push_back(std::move(m));
    }
  }
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return std::string(buf);
}

std::string plot_csv(const std::vector<PlotSeries>& series,
                     const std::vector<PlotMarker>& markers) {
  std::string out =
      "record,policy,agent,tick,x,y,weapon,target,target_x,target_y,damage\n";
  for (const PlotSeries& s : series) {
    for (std::size_t j = 0; j < s.points.size(); ++j) {
      out += "point," + s.policy + "," + std::to_string(s.agent) + "," +
             std::to_string(s.ticks[j]) + "," + format_fixed(s.points[j].x) +
             "," + format_fixed(s.points[j].y) + ",,,,,\n";
    }
  }
  for (const PlotMarker& m : markers) {
    out += "attack," + m.policy + "," + std::to_string(m.shooter) + "," +
           std::to_string(m.tick) + "," + format_fixed(m.from.x) + "," +
           format_fixed(m.from.y) + "," + to_string(m.weapon) + "," +
           std::to_string(m.target) + "," + format_fixed(m.to.x) + "," +
           format_fixed(m.to.y) + "," + std::to_string(m.damage) + "\n";
  }
  return out;
}

std::string svg_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return std::string(buf);
}

std::string plot_svg(const std::vector<PlotSeries>& series,
                     const std::vector<PlotMarker>& markers,
                     double arena_size) {
  constexpr double kMargin = 40.0;
  constexpr double kPlot = 560.0;
  const auto sx = [&](double x) { return kMargin + x / arena_size * kPlot; };
  const auto sy = [&](double y) {
    return kMargin + kPlot - y / arena_size * kPlot;
  };
  // Agent colors follow the paper-figure convention: first agent yellow,
  // second agent red.
  const char* agent_color[2] = {"#f1c40f", "#e74c3c"};

  std::string out;
  out +=
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
      "viewBox=\"0 0 640 640\">\n";
  out += "<rect x=\"40\" y=\"40\" width=\"560\" height=\"560\" "
         "fill=\"#ffffff\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  // the red cube sits at the arena center
  out += "<rect x=\"" + svg_coord(sx(arena_size / 2.0) - 5.0) + "\" y=\"" +
         svg_coord(sy(arena_size / 2.0) - 5.0) +
         "\" width=\"10\" height=\"10\" fill=\"#7f2d26\"/>\n";
  for (const PlotMarker& m : markers) {
    const char* color =
        m.shooter < kNumAgents ? agent_color[m.shooter] : "#555555";
    out += "<line x1=\"" + svg_coord(sx(m.from.x)) + "\" y1=\"" +
           svg_coord(sy(m.from.y)) + "\" x2=\"" + svg_coord(sx(m.to.x)) +
           "\" y2=\"" + svg_coord(sy(m.to.y)) + "\" stroke=\"" + color +
           "\" stroke-width=\"1\" stroke-dasharray=\"4 3\" stroke-opacity=\"" +
           (m.secondary ? "0.45" : "0.8") + "\"/>\n";
  }
  for (const PlotSeries& s : series) {
    out += "<polyline fill=\"none\" stroke=\"";
    out += agent_color[s.agent];
    out += "\" stroke-width=\"2\" stroke-opacity=\"";
    out += s.secondary ? "0.45" : "1.0";
    out += "\" points=\"";
    for (std::size_t j = 0; j < s.points.size(); ++j) {
      if (j > 0) out += ' ';
      out += svg_coord(sx(s.points[j].x)) + "," + svg_coord(sy(s.points[j].y));
    }
    out += "\"/>\n";
  }
  double label_y = 20.0;
  std::vector<std::string> seen;
  for (const PlotSeries& s : series) {
    if (s.agent != 0) continue;
    out += "<text x=\"44\" y=\"" + svg_coord(label_y) +
           "\" font-family=\"monospace\" font-size=\"12\" fill=\"#333333\">" +
           s.policy + (s.secondary ? " (translucent)" : "") + "</text>\n";
    label_y += 14.0;
  }
  out += "</svg>\n";
  return out;
}

int do_plot(const CliOptions& opt, const std::string& a, const std::string& b,
            int episode, const std::string& out_dir) {
  const ExperimentConfig cfg = load_config_or_defaults(opt);
  announce(cfg, opt.seed);
  Registry registry(opt.registry_path);

  std::vector<PlotSeries> series;
  std::vector<PlotMarker> markers;
  std::vector<std::string> ids{a};
  if (!b.empty()) ids.push_back(b);
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const std::vector<EpisodeLog> logs =
        registry.load_policy_trajectories(ids[n]);
    if (episode < 0 || static_cast<std::size_t>(episode) >= logs.size()) {
      throw UsageError("episode " + std::to_string(episode) +
                       " not logged for policy '" + ids[n] +
                       "'; available indices: " + list_indices(logs.size()));
    }
    gather_plot_data(logs[static_cast<std::size_t>(episode)], ids[n], n > 0,
                     series, markers);
  }

  const fs::path dir =
      out_dir.empty() ? registry.file_path("plots") : fs::path(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create plot directory " + dir.string() + ": " +
                  ec.message());
  }
  std::string stem = a;
  if (!b.empty()) stem += "__" + b;
  stem += "_ep" + std::to_string(episode);
  const fs::path csv_path = dir / (stem + ".csv");
  const fs::path svg_path = dir / (stem + ".svg");
  write_text_file_atomic(csv_path, plot_csv(series, markers));
  write_text_file_atomic(svg_path,
                         plot_svg(series, markers, cfg.arena.arena_size_m));
  const json out{{"csv", csv_path.string()}, {"svg", svg_path.string()}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int dispatch(const CLI::App& app, const CliOptions& opt,
             const std::string& base_id, const std::string& skill,
             const std::string& skill_id, const std::string& schedule_path,
             const std::string& eval_id, const std::string& cmp_a,
             const std::string& cmp_b, const std::string& plot_a,
             const std::string& plot_b, int plot_episode,
             const std::string& plot_out) {
  if (app.got_subcommand("train-base")) {
    return do_train(opt, base_id, all_actions_allowed());
  }
  if (app.got_subcommand("train-skill")) {
    const std::string id = skill_id.empty() ? skill : skill_id;
    return do_train(opt, id, mask_for_skill(skill));
  }
  if (app.got_subcommand("diversify")) return do_diversify(opt, schedule_path);
  if (app.got_subcommand("eval")) return do_eval(opt, eval_id);
  if (app.got_subcommand("compare")) return do_compare(opt, cmp_a, cmp_b);
  if (app.got_subcommand("plot")) {
    return do_plot(opt, plot_a, plot_b, plot_episode, plot_out);
  }
  if (app.got_subcommand("dump-defaults")) {
    std::cout << to_json(default_experiment_config()).dump(2) << "\n";
    return 0;
  }
  throw UsageError("no subcommand given");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"moment-matching policy diversity for the 2v1 cube arena"};
  app.require_subcommand(1);

  CliOptions opt;
  app.add_option("--config", opt.config_path,
                 "experiment config JSON (defaults when omitted)");
  app.add_option("--registry", opt.registry_path, "registry directory")
      ->capture_default_str();
  app.add_option("--seed", opt.seed, "master seed")->capture_default_str();

  std::string base_id = "base";
  CLI::App* train_base = app.add_subcommand(
      "train-base", "train the unrestricted baseline joint-policy");
  train_base->fallthrough();
  train_base->add_option("--id", base_id, "policy id")->capture_default_str();
  train_base->add_option("--steps", opt.steps, "override the training budget");

  std::string skill;
  std::string skill_id;
  CLI::App* train_skill = app.add_subcommand(
      "train-skill", "train a weapon-restricted baseline (gun or bomb)");
  train_skill->fallthrough();
  train_skill->add_option("skill", skill, "gun | bomb")
      ->required()
      ->check(CLI::IsMember({"gun", "bomb"}));
  train_skill->add_option("--id", skill_id,
                          "policy id (defaults to the skill name)");
  train_skill->add_option("--steps", opt.steps,
                          "override the training budget");

  std::string schedule_path;
  CLI::App* diversify =
      app.add_subcommand("diversify", "run a diversity training schedule");
  diversify->fallthrough();
  diversify->add_option("schedule", schedule_path,
                        "schedule JSON (defaults to the config's schedule)");
  diversify->add_option("--steps", opt.steps, "override the training budget");

  std::string eval_id;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a registered policy greedily");
  eval_cmd->fallthrough();
  eval_cmd->add_option("id", eval_id, "policy id")->required();
  eval_cmd->add_option("--episodes", opt.episodes, "evaluation episodes");

  std::string cmp_a;
  std::string cmp_b;
  CLI::App* compare = app.add_subcommand(
      "compare", "compare two registered policies (Frechet + MMD)");
  compare->fallthrough();
  compare->add_option("a", cmp_a, "first policy id")->required();
  compare->add_option("b", cmp_b, "second policy id")->required();
  compare->add_option("--episodes", opt.episodes, "paired rollout episodes");

  std::string plot_a;
  std::string plot_b;
  std::string plot_out;
  int plot_episode = 0;
  CLI::App* plot = app.add_subcommand(
      "plot", "emit trajectory CSV + SVG for one logged episode");
  plot->fallthrough();
  plot->add_option("a", plot_a, "policy id")->required();
  plot->add_option("b", plot_b, "second policy id (optional overlay)");
  plot->add_option("--episode", plot_episode, "episode index")
      ->capture_default_str();
  plot->add_option("--out", plot_out,
                   "output directory (default: <registry>/plots)");

  CLI::App* dump =
      app.add_subcommand("dump-defaults", "print the default config JSON");
  dump->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    return dispatch(app, opt, base_id, skill, skill_id, schedule_path, eval_id,
                    cmp_a, cmp_b, plot_a, plot_b, plot_episode, plot_out);
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 1;
  } catch (const UsageError& e) {
    log_error(e.what());
    return 1;
  } catch (const IoError& e) {
    log_error(e.what());
    return 2;
  } catch (const TrainingError& e) {
    log_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log_error("unexpected error: ", e.what());
    return 2;
  }
}

}  // namespace mmpd
