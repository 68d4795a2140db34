#include "mmpd/store.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <utility>

#include "mmpd/errors.hpp"
#include "mmpd/log.hpp"

namespace mmpd {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure: " + path.string());
  return std::move(ss).str();
}

void write_text_file_atomic(const fs::path& path, std::string_view content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failure: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() +
                  ": " + ec.message());
  }
}

json parse_json_text(const std::string& text, const std::string& context) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // e.what() names the byte offset of the failure.
    throw ParseError(context + ": " + e.what());
  }
}

void require_format_version(const json& j, const std::string& context) {
  if (!j.is_object()) throw ParseError(context + ": expected a JSON object");
  if (!j.contains("format_version")) {
    throw VersionError(context + ": missing format_version");
  }
  const json& v = j.at("format_version");
  if (!v.is_number_integer() || v.get<long>() != kFormatVersion) {
    throw VersionError(context + ": unsupported format_version " + v.dump() +
                       " (supported: " + std::to_string(kFormatVersion) + ")");
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return std::string(buf);
}

// --- field readers with aggregated errors ---

namespace {

void check_keys(const json& j,
                std::initializer_list<std::string_view> allowed,
                const std::string& where, std::vector<std::string>& errors) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const std::string_view a : allowed) {
      if (item.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) errors.push_back(where + ": unknown key \"" + item.key() + "\"");
  }
}

void read_double(const json& j, const char* key, double& out,
                 const std::string& where, std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number()) {
    errors.push_back(where + "." + key + ": expected a number");
    return;
  }
  out = v.get<double>();
}

void read_int(const json& j, const char* key, int& out,
              const std::string& where, std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer()) {
    errors.push_back(where + "." + key + ": expected an integer");
    return;
  }
  out = v.get<int>();
}

void read_long(const json& j, const char* key, long& out,
               const std::string& where, std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer()) {
    errors.push_back(where + "." + key + ": expected an integer");
    return;
  }
  out = v.get<long>();
}

void read_string(const json& j, const char* key, std::string& out,
                 const std::string& where, std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_string()) {
    errors.push_back(where + "." + key + ": expected a string");
    return;
  }
  out = v.get<std::string>();
}

void read_int_vector(const json& j, const char* key, std::vector<int>& out,
                     const std::string& where,
                     std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array()) {
    errors.push_back(where + "." + key + ": expected an array of integers");
    return;
  }
  std::vector<int> parsed;
  for (const json& e : v) {
    if (!e.is_number_integer()) {
      errors.push_back(where + "." + key + ": expected an array of integers");
      return;
    }
    parsed.push_back(e.get<int>());
  }
  out = std::move(parsed);
}

void read_string_vector(const json& j, const char* key,
                        std::vector<std::string>& out, const std::string& where,
                        std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array()) {
    errors.push_back(where + "." + key + ": expected an array of strings");
    return;
  }
  std::vector<std::string> parsed;
  for (const json& e : v) {
    if (!e.is_string()) {
      errors.push_back(where + "." + key + ": expected an array of strings");
      return;
    }
    parsed.push_back(e.get<std::string>());
  }
  out = std::move(parsed);
}

void arena_from_json(const json& j, ArenaConfig& c, const std::string& where,
                     std::vector<std::string>& errors) {
  if (!j.is_object()) {
    errors.push_back(where + ": expected an object");
    return;
  }
  check_keys(j,
             {"arena_size_m", "tick_seconds", "white_speed_m_per_tick",
              "gun_range_m", "gun_cooldown_ticks", "gun_damage_hp",
              "bomb_range_m", "bomb_cooldown_ticks", "bomb_damage_hp", "red_hp",
              "white_hp", "red_aim_range_m", "red_fire_range_m",
              "red_fire_cooldown_ticks", "red_turn_deg_per_tick",
              "red_aim_tolerance_deg", "max_ticks", "win_bonus", "loss_penalty",
              "damage_dealt_reward_per_hp", "damage_taken_penalty_per_hp",
              "spawn_jitter_m"},
             where, errors);
  read_double(j, "arena_size_m", c.arena_size_m, where, errors);
  read_double(j, "tick_seconds", c.tick_seconds, where, errors);
  read_double(j, "white_speed_m_per_tick", c.white_speed_m_per_tick, where,
              errors);
  read_double(j, "gun_range_m", c.gun_range_m, where, errors);
  read_int(j, "gun_cooldown_ticks", c.gun_cooldown_ticks, where, errors);
  read_int(j, "gun_damage_hp", c.gun_damage_hp, where, errors);
  read_double(j, "bomb_range_m", c.bomb_range_m, where, errors);
  read_int(j, "bomb_cooldown_ticks", c.bomb_cooldown_ticks, where, errors);
  read_int(j, "bomb_damage_hp", c.bomb_damage_hp, where, errors);
  read_int(j, "red_hp", c.red_hp, where, errors);
  read_int(j, "white_hp", c.white_hp, where, errors);
  read_double(j, "red_aim_range_m", c.red_aim_range_m, where, errors);
  read_double(j, "red_fire_range_m", c.red_fire_range_m, where, errors);
  read_int(j, "red_fire_cooldown_ticks", c.red_fire_cooldown_ticks, where,
           errors);
  read_double(j, "red_turn_deg_per_tick", c.red_turn_deg_per_tick, where,
              errors);
  read_double(j, "red_aim_tolerance_deg", c.red_aim_tolerance_deg, where,
              errors);
  read_int(j, "max_ticks", c.max_ticks, where, errors);
  read_double(j, "win_bonus", c.win_bonus, where, errors);
  read_double(j, "loss_penalty", c.loss_penalty, where, errors);
  read_double(j, "damage_dealt_reward_per_hp", c.damage_dealt_reward_per_hp,
              where, errors);
  read_double(j, "damage_taken_penalty_per_hp", c.damage_taken_penalty_per_hp,
              where, errors);
  read_double(j, "spawn_jitter_m", c.spawn_jitter_m, where, errors);
}

void sac_from_json(const json& j, SacConfig& c, const std::string& where,
                   std::vector<std::string>& errors) {
  if (!j.is_object()) {
    errors.push_back(where + ": expected an object");
    return;
  }
  check_keys(j,
             {"gamma", "learning_rate", "tau", "batch_size", "replay_capacity",
              "alpha", "steps_per_update", "updates_per_round", "warmup_steps",
              "hidden_sizes", "grad_clip_norm", "optimizer", "train_steps",
              "eval_episodes", "eval_every_steps", "early_stop_win_rate",
              "demo_episodes"},
             where, errors);
  read_double(j, "gamma", c.gamma, where, errors);
  read_double(j, "learning_rate", c.learning_rate, where, errors);
  read_double(j, "tau", c.tau, where, errors);
  read_int(j, "batch_size", c.batch_size, where, errors);
  read_int(j, "replay_capacity", c.replay_capacity, where, errors);
  read_double(j, "alpha", c.alpha, where, errors);
  read_int(j, "steps_per_update", c.steps_per_update, where, errors);
  read_int(j, "updates_per_round", c.updates_per_round, where, errors);
  read_int(j, "warmup_steps", c.warmup_steps, where, errors);
  read_int_vector(j, "hidden_sizes", c.hidden_sizes, where, errors);
  read_double(j, "grad_clip_norm", c.grad_clip_norm, where, errors);
  read_string(j, "optimizer", c.optimizer, where, errors);
  read_long(j, "train_steps", c.train_steps, where, errors);
  read_int(j, "eval_episodes", c.eval_episodes, where, errors);
  read_long(j, "eval_every_steps", c.eval_every_steps, where, errors);
  read_double(j, "early_stop_win_rate", c.early_stop_win_rate, where, errors);
  read_int(j, "demo_episodes", c.demo_episodes, where, errors);
}

void penalty_from_json(const json& j, PenaltyConfig& c,
                       const std::string& where,
                       std::vector<std::string>& errors) {
  if (!j.is_object()) {
    errors.push_back(where + ": expected an object");
    return;
  }
  check_keys(j, {"penalty_reward", "relabel_batch_size", "mixing_ratio"},
             where, errors);
  read_double(j, "penalty_reward", c.penalty_reward, where, errors);
  read_int(j, "relabel_batch_size", c.relabel_batch_size, where, errors);
  read_double(j, "mixing_ratio", c.mixing_ratio, where, errors);
}

void schedule_entries_from_json(const json& j, DiversitySchedule& out,
                                const std::string& where,
                                std::vector<std::string>& errors) {
  if (!j.is_array()) {
    errors.push_back(where + ": expected an array");
    return;
  }
  DiversitySchedule parsed;
  std::size_t index = 0;
  for (const json& ej : j) {
    const std::string ewhere = where + "[" + std::to_string(index) + "]";
    ScheduleEntry entry;
    entry.id = "policy_" + std::to_string(index);
    if (!ej.is_object()) {
      errors.push_back(ewhere + ": expected an object");
      ++index;
      continue;
    }
    check_keys(ej, {"id", "agents", "known"}, ewhere, errors);
    read_string(ej, "id", entry.id, ewhere, errors);
    read_int_vector(ej, "agents", entry.agents, ewhere, errors);
    read_string_vector(ej, "known", entry.known, ewhere, errors);
    if (!valid_policy_id(entry.id)) {
      errors.push_back(ewhere + ": invalid policy id '" + entry.id + "'");
    }
    parsed.push_back(std::move(entry));
    ++index;
  }
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    for (std::size_t k = i + 1; k < parsed.size(); ++k) {
      if (parsed[i].id == parsed[k].id) {
        errors.push_back(where + ": duplicate policy id '" + parsed[i].id +
                         "'");
      }
    }
  }
  out = std::move(parsed);
}

}  // namespace

// --- config serialization ---

json arena_to_json(const ArenaConfig& c) {
  return json{
      {"arena_size_m", c.arena_size_m},
      {"tick_seconds", c.tick_seconds},
      {"white_speed_m_per_tick", c.white_speed_m_per_tick},
      {"gun_range_m", c.gun_range_m},
      {"gun_cooldown_ticks", c.gun_cooldown_ticks},
      {"gun_damage_hp", c.gun_damage_hp},
      {"bomb_range_m", c.bomb_range_m},
      {"bomb_cooldown_ticks", c.bomb_cooldown_ticks},
      {"bomb_damage_hp", c.bomb_damage_hp},
      {"red_hp", c.red_hp},
      {"white_hp", c.white_hp},
      {"red_aim_range_m", c.red_aim_range_m},
      {"red_fire_range_m", c.red_fire_range_m},
      {"red_fire_cooldown_ticks", c.red_fire_cooldown_ticks},
      {"red_turn_deg_per_tick", c.red_turn_deg_per_tick},
      {"red_aim_tolerance_deg", c.red_aim_tolerance_deg},
      {"max_ticks", c.max_ticks},
      {"win_bonus", c.win_bonus},
      {"loss_penalty", c.loss_penalty},
      {"damage_dealt_reward_per_hp", c.damage_dealt_reward_per_hp},
      {"damage_taken_penalty_per_hp", c.damage_taken_penalty_per_hp},
      {"spawn_jitter_m", c.spawn_jitter_m},
  };
}

json sac_to_json(const SacConfig& c) {
  return json{
      {"gamma", c.gamma},
      {"learning_rate", c.learning_rate},
      {"tau", c.tau},
      {"batch_size", c.batch_size},
      {"replay_capacity", c.replay_capacity},
      {"alpha", c.alpha},
      {"steps_per_update", c.steps_per_update},
      {"updates_per_round", c.updates_per_round},
      {"warmup_steps", c.warmup_steps},
      {"hidden_sizes", c.hidden_sizes},
      {"grad_clip_norm", c.grad_clip_norm},
      {"optimizer", c.optimizer},
      {"train_steps", c.train_steps},
      {"eval_episodes", c.eval_episodes},
      {"eval_every_steps", c.eval_every_steps},
      {"early_stop_win_rate", c.early_stop_win_rate},
      {"demo_episodes", c.demo_episodes},
  };
}

json penalty_to_json(const PenaltyConfig& c) {
  return json{
      {"penalty_reward", c.penalty_reward},
      {"relabel_batch_size", c.relabel_batch_size},
      {"mixing_ratio", c.mixing_ratio},
  };
}

json schedule_to_json(const DiversitySchedule& schedule) {
  json out = json::array();
  for (const ScheduleEntry& e : schedule) {
    out.push_back(
        json{{"id", e.id}, {"agents", e.agents}, {"known", e.known}});
  }
  return out;
}

ExperimentConfig default_experiment_config() { return ExperimentConfig{}; }

json to_json(const ExperimentConfig& c) {
  return json{
      {"format_version", kFormatVersion},
      {"arena", arena_to_json(c.arena)},
      {"sac", sac_to_json(c.sac)},
      {"penalty", penalty_to_json(c.penalty)},
      {"schedule", schedule_to_json(c.schedule)},
  };
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) {
    throw ConfigError("config: expected a JSON object");
  }
  ExperimentConfig c;
  std::vector<std::string> errors;
  check_keys(j, {"format_version", "arena", "sac", "penalty", "schedule"},
             "config", errors);
  if (j.contains("format_version")) {
    const json& v = j.at("format_version");
    if (!v.is_number_integer() || v.get<long>() != kFormatVersion) {
      errors.push_back("config.format_version: unsupported value " + v.dump());
    }
  }
  if (j.contains("arena")) arena_from_json(j.at("arena"), c.arena, "arena", errors);
  if (j.contains("sac")) sac_from_json(j.at("sac"), c.sac, "sac", errors);
  if (j.contains("penalty")) {
    penalty_from_json(j.at("penalty"), c.penalty, "penalty", errors);
  }
  if (j.contains("schedule")) {
    schedule_entries_from_json(j.at("schedule"), c.schedule, "schedule",
                               errors);
  }
  for (const std::string& v : c.arena.violations()) errors.push_back("arena: " + v);
  for (const std::string& v : c.sac.violations()) errors.push_back("sac: " + v);
  for (const std::string& v : c.penalty.violations()) {
    errors.push_back("penalty: " + v);
  }
  if (!errors.empty()) {
    std::string msg = "invalid experiment config:";
    for (const std::string& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return experiment_config_from_json(
      parse_json_text(read_text_file(path), "config " + path.string()));
}

DiversitySchedule schedule_from_json(const json& j) {
  DiversitySchedule schedule;
  std::vector<std::string> errors;
  schedule_entries_from_json(j, schedule, "schedule", errors);
  if (!errors.empty()) {
    std::string msg = "invalid schedule:";
    for (const std::string& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return schedule;
}

DiversitySchedule load_schedule(const fs::path& path) {
  return schedule_from_json(
      parse_json_text(read_text_file(path), "schedule " + path.string()));
}

// --- checkpoints ---

namespace {

json mlp_to_json(const Mlp& net) {
  return json{{"sizes", net.sizes},
              {"weights", net.weights},
              {"biases", net.biases}};
}

Mlp mlp_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("sizes") || !j.contains("weights") ||
      !j.contains("biases")) {
    throw ParseError(where + ": malformed network object");
  }
  Mlp net;
  try {
    j.at("sizes").get_to(net.sizes);
    j.at("weights").get_to(net.weights);
    j.at("biases").get_to(net.biases);
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (net.sizes.size() < 2) {
    throw ParseError(where + ": needs at least two layer sizes");
  }
  for (const int s : net.sizes) {
    if (s < 1) throw ParseError(where + ": layer sizes must be >= 1");
  }
  const std::size_t layers = net.sizes.size() - 1;
  if (net.weights.size() != layers || net.biases.size() != layers) {
    throw ParseError(where + ": layer count mismatch");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t rows = static_cast<std::size_t>(net.sizes[l + 1]);
    const std::size_t cols = static_cast<std::size_t>(net.sizes[l]);
    if (net.weights[l].size() != rows * cols) {
      throw ParseError(where + ": weight shape mismatch at layer " +
                       std::to_string(l));
    }
    if (net.biases[l].size() != rows) {
      throw ParseError(where + ": bias shape mismatch at layer " +
                       std::to_string(l));
    }
  }
  if (!net.all_finite()) throw ParseError(where + ": non-finite parameter");
  return net;
}

}  // namespace

void save_checkpoint(const PolicyParams& params, const fs::path& path) {
  if (!all_finite(params)) {
    throw UsageError("save_checkpoint: non-finite parameters");
  }
  json j;
  j["format_version"] = kFormatVersion;
  j["alpha"] = params.alpha;
  j["action_mask"] = params.action_mask;
  j["config"] = sac_to_json(params.config);
  json agents = json::array();
  for (const AgentNets& nets : params.agents) {
    agents.push_back(json{{"actor", mlp_to_json(nets.actor)},
                          {"q1", mlp_to_json(nets.q1)},
                          {"q2", mlp_to_json(nets.q2)},
                          {"q1_target", mlp_to_json(nets.q1_target)},
                          {"q2_target", mlp_to_json(nets.q2_target)}});
  }
  j["agents"] = std::move(agents);
  write_text_file_atomic(path, j.dump());
}

PolicyParams load_checkpoint(const fs::path& path) {
  const std::string ctx = "checkpoint " + path.string();
  const json j = parse_json_text(read_text_file(path), ctx);
  require_format_version(j, ctx);

  std::vector<std::string> errors;
  check_keys(j, {"format_version", "alpha", "action_mask", "config", "agents"},
             ctx, errors);
  if (!errors.empty()) throw ParseError(errors.front());

  PolicyParams params;
  if (!j.contains("alpha") || !j.at("alpha").is_number()) {
    throw ParseError(ctx + ": missing or malformed alpha");
  }
  params.alpha = j.at("alpha").get<double>();
  if (!(params.alpha > 0)) throw ParseError(ctx + ": alpha must be > 0");

  if (!j.contains("action_mask") || !j.at("action_mask").is_array() ||
      j.at("action_mask").size() != static_cast<std::size_t>(kNumActions)) {
    throw ParseError(ctx + ": action_mask must be an array of " +
                     std::to_string(kNumActions) + " booleans");
  }
  bool any_allowed = false;
  for (int a = 0; a < kNumActions; ++a) {
    const json& v = j.at("action_mask").at(a);
    if (!v.is_boolean()) {
      throw ParseError(ctx + ": action_mask must contain booleans");
    }
    params.action_mask[a] = v.get<bool>();
    any_allowed = any_allowed || params.action_mask[a];
  }
  if (!any_allowed) throw ParseError(ctx + ": action_mask allows no action");

  if (!j.contains("config")) throw ParseError(ctx + ": missing config");
  sac_from_json(j.at("config"), params.config, ctx + ".config", errors);
  for (const std::string& v : params.config.violations()) {
    errors.push_back(ctx + ".config: " + v);
  }
  if (!errors.empty()) throw ParseError(errors.front());

  if (!j.contains("agents") || !j.at("agents").is_array() ||
      j.at("agents").size() != static_cast<std::size_t>(kNumAgents)) {
    throw ParseError(ctx + ": agents must be an array of " +
                     std::to_string(kNumAgents) + " entries");
  }
  for (int k = 0; k < kNumAgents; ++k) {
    const json& aj = j.at("agents").at(k);
    const std::string awhere = ctx + ".agents[" + std::to_string(k) + "]";
    if (!aj.is_object()) throw ParseError(awhere + ": expected an object");
    AgentNets& nets = params.agents[k];
    nets.actor = mlp_from_json(aj.value("actor", json()), awhere + ".actor");
    nets.q1 = mlp_from_json(aj.value("q1", json()), awhere + ".q1");
    nets.q2 = mlp_from_json(aj.value("q2", json()), awhere + ".q2");
    nets.q1_target =
        mlp_from_json(aj.value("q1_target", json()), awhere + ".q1_target");
    nets.q2_target =
        mlp_from_json(aj.value("q2_target", json()), awhere + ".q2_target");
    if (!same_shape(nets.q1, nets.q1_target) ||
        !same_shape(nets.q2, nets.q2_target)) {
      throw ParseError(awhere + ": target critic shape mismatch");
    }
    if (nets.actor.output_size() != kNumActions ||
        nets.q1.output_size() != kNumActions ||
        nets.q2.output_size() != kNumActions) {
      throw ParseError(awhere + ": networks must have " +
                       std::to_string(kNumActions) + " outputs");
    }
  }
  return params;
}

// --- demonstrations ---

namespace {

json transition_to_json(const Transition& t) {
  return json{{"s", t.state},
              {"a", t.actions},
              {"r", t.reward},
              {"s2", t.next_state},
              {"d", t.done}};
}

Transition transition_from_json(const json& j, const std::string& where) {
  Transition t;
  try {
    j.at("s").get_to(t.state);
    j.at("a").get_to(t.actions);
    t.reward = j.at("r").get<double>();
    j.at("s2").get_to(t.next_state);
    t.done = j.at("d").get<bool>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  for (const int a : t.actions) {
    if (a < 0 || a >= kNumActions) {
      throw ParseError(where + ": action out of range");
    }
  }
  return t;
}

}  // namespace

void save_demonstrations(const DemonstrationSet& demos, const fs::path& path) {
  std::string out;
  for (std::size_t i = 0; i < demos.episodes.size(); ++i) {
    const EpisodeRollout& e = demos.episodes[i];
    json line;
    line["format_version"] = kFormatVersion;
    line["master_seed"] = demos.seed;
    line["episode"] = i;
    line["seed"] = e.log.seed;
    line["outcome"] = to_string(e.log.outcome);
    line["episode_return"] = e.log.episode_return;
    json trs = json::array();
    for (const Transition& t : e.transitions) {
      trs.push_back(transition_to_json(t));
    }
    line["transitions"] = std::move(trs);
    out += line.dump();
    out += '\n';
  }
  write_text_file_atomic(path, out);
}

DemonstrationSet load_demonstrations(const fs::path& path) {
  const std::string text = read_text_file(path);
  DemonstrationSet set;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string ctx =
        "demonstrations " + path.string() + " line " + std::to_string(lineno);
    const json j = parse_json_text(line, ctx);
    require_format_version(j, ctx);
    EpisodeRollout e;
    try {
      set.seed = j.at("master_seed").get<std::uint64_t>();
      e.log.seed = j.at("seed").get<std::uint64_t>();
      e.log.outcome = outcome_from_string(j.at("outcome").get<std::string>());
      e.log.episode_return = j.at("episode_return").get<double>();
      for (const json& tj : j.at("transitions")) {
        e.transitions.push_back(transition_from_json(tj, ctx));
      }
    } catch (const json::exception& ex) {
      throw ParseError(ctx + ": " + ex.what());
    } catch (const UsageError& ex) {
      throw ParseError(ctx + ": " + ex.what());
    }
    set.episodes.push_back(std::move(e));
  }
  return set;
}

// --- trajectory logs ---

namespace {

json event_to_json(const AttackEvent& ev) {
  return json{{"shooter", ev.shooter},
              {"target", ev.target},
              {"weapon", to_string(ev.weapon)},
              {"damage", ev.damage}};
}

json tick_to_json(const TickRecord& r) {
  json whites = json::array();
  for (int k = 0; k < kNumAgents; ++k) {
    whites.push_back(json{{"x", r.white_pos[k].x},
                          {"y", r.white_pos[k].y},
                          {"hp", r.white_hp[k]},
                          {"alive", r.white_alive[k]}});
  }
  json events = json::array();
  for (const AttackEvent& ev : r.events) events.push_back(event_to_json(ev));
  return json{{"tick", r.tick},
              {"white", std::move(whites)},
              {"actions", r.actions},
              {"red_heading_deg", r.red_heading_deg},
              {"red_hp", r.red_hp},
              {"reward", r.reward},
              {"events", std::move(events)}};
}

json final_to_json(const WorldState& s) {
  json whites = json::array();
  for (const WhiteCube& w : s.white) {
    whites.push_back(json{{"x", w.pos.x},
                          {"y", w.pos.y},
                          {"hp", w.hp},
                          {"alive", w.alive},
                          {"gun_cd", w.gun_cd},
                          {"bomb_cd", w.bomb_cd}});
  }
  return json{{"tick", s.tick},
              {"white", std::move(whites)},
              {"red", json{{"x", s.red.pos.x},
                           {"y", s.red.pos.y},
                           {"heading_deg", s.red.heading_deg},
                           {"hp", s.red.hp},
                           {"fire_cd", s.red.fire_cd}}}};
}

json episode_line_json(const EpisodeLog& e) {
  json ticks = json::array();
  for (const TickRecord& r : e.ticks) ticks.push_back(tick_to_json(r));
  return json{{"format_version", kFormatVersion},
              {"seed", e.seed},
              {"outcome", to_string(e.outcome)},
              {"episode_return", e.episode_return},
              {"final", final_to_json(e.final_state)},
              {"ticks", std::move(ticks)}};
}

EpisodeLog episode_from_line(const json& j, const std::string& ctx) {
  EpisodeLog e;
  try {
    e.seed = j.at("seed").get<std::uint64_t>();
    e.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    e.episode_return = j.at("episode_return").get<double>();

    const json& fj = j.at("final");
    e.final_state.tick = fj.at("tick").get<int>();
    const json& fw = fj.at("white");
    for (int k = 0; k < kNumAgents; ++k) {
      WhiteCube& w = e.final_state.white[k];
      const json& wj = fw.at(k);
      w.pos.x = wj.at("x").get<double>();
      w.pos.y = wj.at("y").get<double>();
      w.hp = wj.at("hp").get<int>();
      w.alive = wj.at("alive").get<bool>();
      w.gun_cd = wj.at("gun_cd").get<int>();
      w.bomb_cd = wj.at("bomb_cd").get<int>();
    }
    const json& rj = fj.at("red");
    e.final_state.red.pos.x = rj.at("x").get<double>();
    e.final_state.red.pos.y = rj.at("y").get<double>();
    e.final_state.red.heading_deg = rj.at("heading_deg").get<double>();
    e.final_state.red.hp = rj.at("hp").get<int>();
    e.final_state.red.fire_cd = rj.at("fire_cd").get<int>();

    for (const json& tj : j.at("ticks")) {
      TickRecord r;
      r.tick = tj.at("tick").get<int>();
      const json& tw = tj.at("white");
      for (int k = 0; k < kNumAgents; ++k) {
        const json& wj = tw.at(k);
        r.white_pos[k].x = wj.at("x").get<double>();
        r.white_pos[k].y = wj.at("y").get<double>();
        r.white_hp[k] = wj.at("hp").get<int>();
        r.white_alive[k] = wj.at("alive").get<bool>();
      }
      tj.at("actions").get_to(r.actions);
      r.red_heading_deg = tj.at("red_heading_deg").get<double>();
      r.red_hp = tj.at("red_hp").get<int>();
      r.reward = tj.at("reward").get<double>();
      for (const json& evj : tj.at("events")) {
        AttackEvent ev;
        ev.shooter = evj.at("shooter").get<int>();
        ev.target = evj.at("target").get<int>();
        ev.weapon = weapon_from_string(evj.at("weapon").get<std::string>());
        ev.damage = evj.at("damage").get<int>();
        r.events.push_back(ev);
      }
      e.ticks.push_back(std::move(r));
    }
  } catch (const json::exception& ex) {
    throw ParseError(ctx + ": " + ex.what());
  } catch (const UsageError& ex) {
    throw ParseError(ctx + ": " + ex.what());
  }
  return e;
}

}  // namespace

void append_trajectory(const EpisodeLog& episode, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open file for append: " + path.string());
  out << episode_line_json(episode).dump() << '\n';
  out.flush();
  if (!out) throw IoError("append failure: " + path.string());
}

void append_trajectories(std::span<const EpisodeLog> episodes,
                         const fs::path& path) {
  if (episodes.empty()) return;  // no episodes, file untouched
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open file for append: " + path.string());
  for (const EpisodeLog& e : episodes) {
    out << episode_line_json(e).dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError("append failure: " + path.string());
}

std::vector<EpisodeLog> load_trajectories(const fs::path& path) {
  const std::string text = read_text_file(path);
  std::vector<EpisodeLog> out;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string ctx =
        "trajectories " + path.string() + " line " + std::to_string(lineno);
    const json j = parse_json_text(line, ctx);
    require_format_version(j, ctx);
    out.push_back(episode_from_line(j, ctx));
  }
  return out;
}

// --- reports ---

json eval_report_json(const EvalReport& r) {
  return json{{"episodes", r.episodes},
              {"wins", r.wins},
              {"win_rate", r.win_rate},
              {"mean_return", r.mean_return},
              {"mean_ticks", r.mean_ticks}};
}

json train_report_json(const TrainReport& r,
                       const std::vector<KnownDisagreement>& dis) {
  json evals = json::array();
  for (const EvalPoint& e : r.evals) {
    evals.push_back(json{{"step", e.step},
                         {"win_rate", e.win_rate},
                         {"mean_return", e.mean_return}});
  }
  json episodes = json::array();
  for (const EpisodeStat& e : r.episodes) {
    episodes.push_back(json{{"step_end", e.step_end},
                            {"return", e.episode_return},
                            {"outcome", to_string(e.outcome)},
                            {"ticks", e.ticks}});
  }
  json disagreement = json::array();
  for (const KnownDisagreement& kd : dis) {
    json rates = json::array();
    for (const AgentRate& ar : kd.rates) {
      rates.push_back(json{{"agent", ar.agent}, {"rate", ar.rate}});
    }
    disagreement.push_back(
        json{{"known_id", kd.known_id}, {"rates", std::move(rates)}});
  }
  return json{{"format_version", kFormatVersion},
              {"steps_done", r.steps_done},
              {"early_stopped", r.early_stopped},
              {"final_win_rate", r.final_win_rate},
              {"final_mean_return", r.final_mean_return},
              {"fresh_inserted", r.fresh_inserted},
              {"relabeled_inserted", r.relabeled_inserted},
              {"evals", std::move(evals)},
              {"episodes", std::move(episodes)},
              {"disagreement", std::move(disagreement)}};
}

json comparison_report_json(const ComparisonReport& r) {
  return json{{"format_version", kFormatVersion},
              {"policy_a", r.id_a},
              {"policy_b", r.id_b},
              {"episodes", r.episodes},
              {"seed", r.seed},
              {"mean_frechet", r.mean_frechet},
              {"disagreement", r.disagreement},
              {"mmd", json{{"value", r.mmd.mmd},
                           {"sigma", r.mmd.sigma},
                           {"sigma_from_median", r.mmd.sigma_from_median},
                           {"samples_p", r.mmd.samples_p},
                           {"samples_q", r.mmd.samples_q},
                           {"disagreement_p", r.mmd.disagreement_p},
                           {"disagreement_q", r.mmd.disagreement_q}}}};
}

std::string comparison_report_csv(const ComparisonReport& r) {
  std::string out =
      "policy_a,policy_b,agent,mean_frechet,disagreement,mmd,sigma,episodes\n";
  char buf[512];
  for (int k = 0; k < kNumAgents; ++k) {
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%.17g,%.17g,%.17g,%.17g,%d\n",
                  r.id_a.c_str(), r.id_b.c_str(), k, r.mean_frechet[k],
                  r.disagreement[k], r.mmd.mmd, r.mmd.sigma, r.episodes);
    out += buf;
  }
  return out;
}

// --- registry ---

bool valid_policy_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  if (id.front() == '.') return false;
  for (const char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

Registry::Registry(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) {
    throw IoError("cannot create registry directory " + root_.string() + ": " +
                  ec.message());
  }
  fs::create_directories(root_ / "compare", ec);
  if (ec) {
    throw IoError("cannot create registry directory " +
                  (root_ / "compare").string() + ": " + ec.message());
  }
  if (fs::exists(root_ / "registry.json")) load_index();
}

void Registry::load_index() {
  const fs::path index = root_ / "registry.json";
  const std::string ctx = "registry " + index.string();
  const json j = parse_json_text(read_text_file(index), ctx);
  require_format_version(j, ctx);
  if (!j.contains("policies") || !j.at("policies").is_object()) {
    throw ParseError(ctx + ": missing policies object");
  }
  for (const auto& item : j.at("policies").items()) {
    const std::string& id = item.key();
    if (!valid_policy_id(id)) {
      throw ParseError(ctx + ": invalid policy id '" + id + "'");
    }
    const json& pj = item.value();
    RegistryEntry e;
    try {
      pj.at("checkpoint").get_to(e.checkpoint_file);
      pj.at("demonstrations").get_to(e.demos_file);
      pj.at("trajectories").get_to(e.trajectories_file);
      pj.at("report").get_to(e.report_file);
      e.seed = pj.at("seed").get<std::uint64_t>();
      pj.at("config_hash").get_to(e.config_hash);
      pj.at("agents").get_to(e.agents);
      pj.at("known").get_to(e.known);
      e.train_steps = pj.at("train_steps").get<long>();
    } catch (const json::exception& ex) {
      throw ParseError(ctx + ": policy '" + id + "': " + ex.what());
    }
    for (const std::string* f : {&e.checkpoint_file, &e.demos_file,
                                 &e.trajectories_file, &e.report_file}) {
      if (!fs::exists(root_ / *f)) {
        throw IoError(ctx + ": policy '" + id + "' references missing file " +
                      *f);
      }
    }
    entries_.emplace(id, std::move(e));
  }
}

void Registry::save_index() const {
  json policies = json::object();
  for (const auto& [id, e] : entries_) {
    policies[id] = json{{"checkpoint", e.checkpoint_file},
                        {"demonstrations", e.demos_file},
                        {"trajectories", e.trajectories_file},
                        {"report", e.report_file},
                        {"seed", e.seed},
                        {"config_hash", e.config_hash},
                        {"agents", e.agents},
                        {"known", e.known},
                        {"train_steps", e.train_steps}};
  }
  const json j{{"format_version", kFormatVersion},
               {"policies", std::move(policies)}};
  write_text_file_atomic(root_ / "registry.json", j.dump(2) + "\n");
}

bool Registry::has(const std::string& id) const {
  return entries_.count(id) > 0;
}

std::vector<std::string> Registry::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, e] : entries_) out.push_back(id);
  return out;
}

const RegistryEntry& Registry::entry(const std::string& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) {
    throw UsageError("unknown policy id '" + id + "' in registry " +
                     root_.string());
  }
  return it->second;
}

void Registry::add_policy(const std::string& id, const PolicyParams& params,
                          const DemonstrationSet& demos, const json& report,
                          std::uint64_t seed, const std::string& hash,
                          const AgentSelection& agents,
                          const std::vector<std::string>& known,
                          long train_steps) {
  if (!valid_policy_id(id)) throw ConfigError("invalid policy id: '" + id + "'");
  if (has(id)) throw UsageError("policy '" + id + "' is already registered");

  RegistryEntry e;
  e.checkpoint_file = id + ".ckpt.json";
  e.demos_file = id + ".demos.jsonl";
  e.trajectories_file = id + ".traj.jsonl";
  e.report_file = id + ".report.json";
  e.seed = seed;
  e.config_hash = hash;
  e.agents = agents;
  e.known = known;
  e.train_steps = train_steps;

  save_checkpoint(params, root_ / e.checkpoint_file);
  save_demonstrations(demos, root_ / e.demos_file);
  {
    // Rebuild the trajectory file from scratch; a crashed earlier run may
    // have left a partial one behind.
    std::error_code ec;
    fs::remove(root_ / e.trajectories_file, ec);
    std::vector<EpisodeLog> logs;
    logs.reserve(demos.episodes.size());
    for (const EpisodeRollout& ep : demos.episodes) logs.push_back(ep.log);
    if (logs.empty()) {
      write_text_file_atomic(root_ / e.trajectories_file, "");
    } else {
      append_trajectories(logs, root_ / e.trajectories_file);
    }
  }
  json report_with_version = report;
  report_with_version["format_version"] = kFormatVersion;
  write_text_file_atomic(root_ / e.report_file,
                         report_with_version.dump(2) + "\n");

  // Index last: a crash before this point leaves files but no index entry.
  entries_[id] = std::move(e);
  save_index();
  log_info("registered policy '", id, "' in ", root_.string());
}

KnownPolicy Registry::load_policy(const std::string& id) const {
  const RegistryEntry& e = entry(id);
  KnownPolicy k;
  k.id = id;
  k.params = load_checkpoint(root_ / e.checkpoint_file);
  const DemonstrationSet demos = load_demonstrations(root_ / e.demos_file);
  k.demos = demos.flat();
  k.demo_seed = demos.seed;
  k.demo_episodes = static_cast<int>(demos.episodes.size());
  return k;
}

json Registry::load_report(const std::string& id) const {
  const RegistryEntry& e = entry(id);
  const fs::path path = root_ / e.report_file;
  return parse_json_text(read_text_file(path), "report " + path.string());
}

std::vector<EpisodeLog> Registry::load_policy_trajectories(
    const std::string& id) const {
  const RegistryEntry& e = entry(id);
  return load_trajectories(root_ / e.trajectories_file);
}

fs::path Registry::file_path(const std::string& relative) const {
  return root_ / relative;
}

}  // namespace mmpd
