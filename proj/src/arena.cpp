#include "mmpd/arena.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mmpd/errors.hpp"

namespace mmpd {

double distance(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

std::vector<std::string> ArenaConfig::violations() const {
  std::vector<std::string> v;
  auto require = [&v](bool ok, const char* msg) {
    if (!ok) v.emplace_back(msg);
  };
  require(arena_size_m > 0, "arena_size_m must be > 0");
  require(tick_seconds > 0, "tick_seconds must be > 0");
  require(white_speed_m_per_tick > 0, "white_speed_m_per_tick must be > 0");
  require(gun_range_m > 0, "gun_range_m must be > 0");
  require(bomb_range_m > 0, "bomb_range_m must be > 0");
  require(red_aim_range_m > 0, "red_aim_range_m must be > 0");
  require(red_fire_range_m > 0, "red_fire_range_m must be > 0");
  require(gun_cooldown_ticks > 0, "gun_cooldown_ticks must be > 0");
  require(bomb_cooldown_ticks > 0, "bomb_cooldown_ticks must be > 0");
  require(red_fire_cooldown_ticks > 0, "red_fire_cooldown_ticks must be > 0");
  require(gun_damage_hp > 0, "gun_damage_hp must be > 0");
  require(bomb_damage_hp > 0, "bomb_damage_hp must be > 0");
  require(red_hp > 0, "red_hp must be > 0");
  require(white_hp > 0, "white_hp must be > 0");
  require(max_ticks >= 1, "max_ticks must be >= 1");
  require(red_turn_deg_per_tick > 0, "red_turn_deg_per_tick must be > 0");
  require(red_aim_tolerance_deg >= 0, "red_aim_tolerance_deg must be >= 0");
  require(spawn_jitter_m >= 0, "spawn_jitter_m must be >= 0");
  require(gun_range_m > bomb_range_m, "gun_range_m must be > bomb_range_m");
  require(bomb_damage_hp > gun_damage_hp,
          "bomb_damage_hp must be > gun_damage_hp");
  require(red_aim_range_m >= red_fire_range_m,
          "red_aim_range_m must be >= red_fire_range_m");
  return v;
}

void ArenaConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid arena config:";
  for (const auto& s : v) msg += " " + s + ";";
  throw ConfigError(msg);
}

const char* to_string(WhiteAction a) {
  switch (a) {
    case WhiteAction::Stay: return "stay";
    case WhiteAction::MoveN: return "move_n";
    case WhiteAction::MoveS: return "move_s";
    case WhiteAction::MoveE: return "move_e";
    case WhiteAction::MoveW: return "move_w";
    case WhiteAction::FireGun: return "fire_gun";
    case WhiteAction::FireBomb: return "fire_bomb";
  }
  return "?";
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Ongoing: return "ongoing";
    case Outcome::Win: return "win";
    case Outcome::Loss: return "loss";
    case Outcome::Timeout: return "timeout";
  }
  return "?";
}

Outcome outcome_from_string(const std::string& s) {
  if (s == "ongoing") return Outcome::Ongoing;
  if (s == "win") return Outcome::Win;
  if (s == "loss") return Outcome::Loss;
  if (s == "timeout") return Outcome::Timeout;
  throw ParseError("unknown outcome: " + s);
}

const char* to_string(Weapon w) {
  switch (w) {
    case Weapon::Gun: return "gun";
    case Weapon::Bomb: return "bomb";
    case Weapon::RedGun: return "red_gun";
  }
  return "?";
}

Weapon weapon_from_string(const std::string& s) {
  if (s == "gun") return Weapon::Gun;
  if (s == "bomb") return Weapon::Bomb;
  if (s == "red_gun") return Weapon::RedGun;
  throw ParseError("unknown weapon: " + s);
}

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

double clamp_coord(double v, double size) { return std::clamp(v, 0.0, size); }

// Wraps an angle to [0, 360).
double normalize_deg(double a) {
  a = std::fmod(a, 360.0);
  if (a < 0) a += 360.0;
  return a;
}

// Signed smallest difference a - b, wrapped to (-180, 180].
double angle_diff_deg(double a, double b) {
  double d = std::fmod(a - b, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

double bearing_deg(const Vec2& from, const Vec2& to) {
  return std::atan2(to.y - from.y, to.x - from.x) * kDegPerRad;
}

}  // namespace

WorldState reset(const ArenaConfig& config, std::uint64_t seed) {
  config.validate();
  WorldState s;
  s.tick = 0;
  const double size = config.arena_size_m;
  s.red = RedCube{{size / 2.0, size / 2.0}, 0.0, config.red_hp, 0};

  // Opposite-corner spawn anchors; with the default geometry every jittered
  // spawn stays outside all weapon ranges.
  const std::array<Vec2, kNumAgents> anchors = {Vec2{0.0, 0.0},
                                                Vec2{size, size}};
  Rng rng(seed);
  const double j = config.spawn_jitter_m;
  for (int k = 0; k < kNumAgents; ++k) {
    const double dx = rng.uniform(-j, j);
    const double dy = rng.uniform(-j, j);
    s.white[k] = WhiteCube{{clamp_coord(anchors[k].x + dx, size),
                            clamp_coord(anchors[k].y + dy, size)},
                           config.white_hp,
                           0,
                           0,
                           true};
  }
  s.rng = rng;
  return s;
}

Outcome outcome_of(const WorldState& state, const ArenaConfig& config) {
  if (state.red.hp <= 0) return Outcome::Win;
  if (!state.white[0].alive && !state.white[1].alive) return Outcome::Loss;
  if (state.tick >= config.max_ticks) return Outcome::Timeout;
  return Outcome::Ongoing;
}

bool is_terminal(const WorldState& state, const ArenaConfig& config) {
  return outcome_of(state, config) != Outcome::Ongoing;
}

int red_target(const WorldState& state, const ArenaConfig& config) {
  int target = -1;
  double best = config.red_aim_range_m;
  for (int k = 0; k < kNumAgents; ++k) {
    if (!state.white[k].alive) continue;
    const double d = distance(state.white[k].pos, state.red.pos);
    if (d <= best && (target == -1 || d < best)) {
      // <= on the first candidate, strict < afterwards: ties go to the
      // lower agent index.
      target = k;
      best = d;
    }
  }
  return target;
}

RedDecision red_controller(const WorldState& state,
                           const ArenaConfig& config) {
  const int t = red_target(state, config);
  if (t < 0) return {0.0, false};
  const WhiteCube& w = state.white[t];
  const double want = bearing_deg(state.red.pos, w.pos);
  const double err = angle_diff_deg(want, state.red.heading_deg);
  const double turn = std::clamp(err, -config.red_turn_deg_per_tick,
                                 config.red_turn_deg_per_tick);
  const double residual = err - turn;
  const bool fire = std::abs(residual) <= config.red_aim_tolerance_deg &&
                    distance(w.pos, state.red.pos) <= config.red_fire_range_m &&
                    state.red.fire_cd == 0;
  return {turn, fire};
}

StepResult step(const WorldState& state,
                const std::array<WhiteAction, kNumAgents>& actions,
                const ArenaConfig& config) {
  if (is_terminal(state, config)) {
    throw UsageError("step: episode already ended with outcome " +
                     std::string(to_string(outcome_of(state, config))));
  }

  StepResult result;
  WorldState& n = result.next;
  n = state;

  int red_hp_lost = 0;
  int white_hp_lost = 0;

  // 1. Movement. Dead whites ignore their actions.
  const double speed = config.white_speed_m_per_tick;
  const double size = config.arena_size_m;
  for (int k = 0; k < kNumAgents; ++k) {
    WhiteCube& w = n.white[k];
    if (!w.alive) continue;
    switch (actions[k]) {
      case WhiteAction::MoveN: w.pos.y = clamp_coord(w.pos.y + speed, size); break;
      case WhiteAction::MoveS: w.pos.y = clamp_coord(w.pos.y - speed, size); break;
      case WhiteAction::MoveE: w.pos.x = clamp_coord(w.pos.x + speed, size); break;
      case WhiteAction::MoveW: w.pos.x = clamp_coord(w.pos.x - speed, size); break;
      default: break;
    }
  }

  // 2. White attacks, agent 0 first. A shot happens only when in range,
  // off cooldown and the red cube is still standing; anything else is a
  // no-op that leaves the cooldown untouched.
  for (int k = 0; k < kNumAgents; ++k) {
    WhiteCube& w = n.white[k];
    if (!w.alive) continue;
    const double d = distance(w.pos, n.red.pos);
    if (actions[k] == WhiteAction::FireGun && n.red.hp > 0 &&
        d <= config.gun_range_m && w.gun_cd == 0) {
      const int dmg = std::min(config.gun_damage_hp, n.red.hp);
      n.red.hp -= dmg;
      red_hp_lost += dmg;
      w.gun_cd = config.gun_cooldown_ticks;
      result.events.push_back({k, kRedUnitId, Weapon::Gun, dmg});
    } else if (actions[k] == WhiteAction::FireBomb && n.red.hp > 0 &&
               d <= config.bomb_range_m && w.bomb_cd == 0) {
      const int dmg = std::min(config.bomb_damage_hp, n.red.hp);
      n.red.hp -= dmg;
      red_hp_lost += dmg;
      w.bomb_cd = config.bomb_cooldown_ticks;
      result.events.push_back({k, kRedUnitId, Weapon::Bomb, dmg});
    }
  }

  // 3. Red acts unless it was destroyed this tick.
  if (n.red.hp > 0) {
    const RedDecision d = red_controller(n, config);
    n.red.heading_deg = normalize_deg(n.red.heading_deg + d.turn_delta_deg);
    if (d.fire) {
      const int t = red_target(n, config);
      WhiteCube& w = n.white[t];
      const int dmg = std::min(kRedShotDamage, w.hp);
      w.hp -= dmg;
      white_hp_lost += dmg;
      if (w.hp <= 0) w.alive = false;  // position stays frozen
      n.red.fire_cd = config.red_fire_cooldown_ticks;
      result.events.push_back({kRedUnitId, t, Weapon::RedGun, dmg});
    }
  }

  // 4. Cooldowns tick down (floor 0), time advances.
  for (auto& w : n.white) {
    w.gun_cd = std::max(0, w.gun_cd - 1);
    w.bomb_cd = std::max(0, w.bomb_cd - 1);
  }
  n.red.fire_cd = std::max(0, n.red.fire_cd - 1);
  n.tick += 1;

  // 5. Shared reward and outcome.
  double reward = config.damage_dealt_reward_per_hp * red_hp_lost -
                  config.damage_taken_penalty_per_hp * white_hp_lost;
  const Outcome outcome = outcome_of(n, config);
  if (outcome == Outcome::Win) {
    reward += config.win_bonus;
  } else if (outcome == Outcome::Loss) {
    reward -= config.loss_penalty;  // a timeout ends the episode at 0
  }
  result.reward = reward;
  result.outcome = outcome;
  result.done = outcome != Outcome::Ongoing;
  return result;
}

void observe_into(const WorldState& state, const ArenaConfig& config,
                  std::span<double> out) {
  if (out.size() != kObservationSize) {
    throw UsageError("observe_into: output span must have length 16");
  }
  const double size = config.arena_size_m;
  for (int k = 0; k < kNumAgents; ++k) {
    const WhiteCube& w = state.white[k];
    out[6 * k + 0] = w.pos.x / size;
    out[6 * k + 1] = w.pos.y / size;
    out[6 * k + 2] = static_cast<double>(w.hp) / config.white_hp;
    out[6 * k + 3] = static_cast<double>(w.gun_cd) / config.gun_cooldown_ticks;
    out[6 * k + 4] =
        static_cast<double>(w.bomb_cd) / config.bomb_cooldown_ticks;
    out[6 * k + 5] = w.alive ? 1.0 : 0.0;
  }
  const double heading_rad = state.red.heading_deg / kDegPerRad;
  out[12] = std::sin(heading_rad);
  out[13] = std::cos(heading_rad);
  out[14] = static_cast<double>(state.red.hp) / config.red_hp;
  out[15] =
      static_cast<double>(state.red.fire_cd) / config.red_fire_cooldown_ticks;
}

std::vector<double> observe(const WorldState& state,
                            const ArenaConfig& config) {
  std::vector<double> out(kObservationSize);
  observe_into(state, config, out);
  return out;
}

}  // namespace mmpd
