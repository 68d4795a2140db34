#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmpd/rng.hpp"

namespace mmpd {

inline constexpr int kNumAgents = 2;
inline constexpr int kNumActions = 7;
inline constexpr int kObservationSize = 16;
inline constexpr int kRedUnitId = 2;  // shooter/target id of the red cube in events
inline constexpr int kRedShotDamage = 1;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

double distance(const Vec2& a, const Vec2& b);

// Arena geometry, combat constants and reward shaping. Times are expressed
// in integral ticks of tick_seconds each so the simulation stays exact.
struct ArenaConfig {
  double arena_size_m = 40.0;
  double tick_seconds = 0.5;
  double white_speed_m_per_tick = 2.0;

  double gun_range_m = 20.0;
  int gun_cooldown_ticks = 4;
  int gun_damage_hp = 1;
  double bomb_range_m = 15.0;
  int bomb_cooldown_ticks = 6;
  int bomb_damage_hp = 2;

  int red_hp = 8;
  int white_hp = 2;
  double red_aim_range_m = 100.0;
  double red_fire_range_m = 20.0;
  int red_fire_cooldown_ticks = 4;
  double red_turn_deg_per_tick = 45.0;
  double red_aim_tolerance_deg = 10.0;

  int max_ticks = 240;

  double win_bonus = 5.0;
  double loss_penalty = 5.0;
  double damage_dealt_reward_per_hp = 1.0;
  double damage_taken_penalty_per_hp = 0.5;
  double spawn_jitter_m = 2.0;

  // All violated invariants, empty when valid.
  std::vector<std::string> violations() const;
  // Throws ConfigError naming every violated invariant.
  void validate() const;

  bool operator==(const ArenaConfig&) const = default;
};

// Discrete action set of a white cube. Integer encoding is stable:
// attacks auto-aim at the red cube, moves are axis-aligned.
enum class WhiteAction : int {
  Stay = 0,
  MoveN = 1,  // +y
  MoveS = 2,  // -y
  MoveE = 3,  // +x
  MoveW = 4,  // -x
  FireGun = 5,
  FireBomb = 6,
};

const char* to_string(WhiteAction a);

struct WhiteCube {
  Vec2 pos;
  int hp = 0;
  int gun_cd = 0;
  int bomb_cd = 0;
  bool alive = false;
  bool operator==(const WhiteCube&) const = default;
};

struct RedCube {
  Vec2 pos;                 // fixed after reset; the red cube only turns
  double heading_deg = 0.0; // [0, 360), 0 = +x, counterclockwise
  int hp = 0;
  int fire_cd = 0;
  bool operator==(const RedCube&) const = default;
};

struct WorldState {
  int tick = 0;
  std::array<WhiteCube, kNumAgents> white;
  RedCube red;
  Rng rng;  // travels with the state; step has no hidden randomness
  bool operator==(const WorldState&) const = default;
};

enum class Outcome { Ongoing, Win, Loss, Timeout };

const char* to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

enum class Weapon { Gun, Bomb, RedGun };

const char* to_string(Weapon w);
Weapon weapon_from_string(const std::string& s);

struct AttackEvent {
  int shooter = 0;  // 0/1 = white agents, kRedUnitId = red
  int target = 0;
  Weapon weapon = Weapon::Gun;
  int damage = 0;
  bool operator==(const AttackEvent&) const = default;
};

struct StepResult {
  WorldState next;
  double reward = 0.0;  // shared global reward
  bool done = false;
  Outcome outcome = Outcome::Ongoing;
  std::vector<AttackEvent> events;
};

struct RedDecision {
  double turn_delta_deg = 0.0;
  bool fire = false;
};

// Fresh episode: red at the arena center, whites at opposite-corner spawn
// anchors plus per-coordinate uniform jitter (clamped to the arena).
// Identical seeds produce bit-identical states.
WorldState reset(const ArenaConfig& config, std::uint64_t seed);

Outcome outcome_of(const WorldState& state, const ArenaConfig& config);
bool is_terminal(const WorldState& state, const ArenaConfig& config);

// Index of the red cube's current target: nearest living white within
// aim range, ties broken toward the lower agent index; -1 when none.
int red_target(const WorldState& state, const ArenaConfig& config);

// Scripted red behavior: turn toward the target by at most the per-tick
// turn rate and fire when aligned, in range and off cooldown. Pure.
RedDecision red_controller(const WorldState& state, const ArenaConfig& config);

// Advances one tick. Resolution order: white movement, white attacks
// (agent 0 then agent 1), red turn/fire, cooldown decrement + tick
// increment, then reward and outcome. Throws UsageError on terminal states.
StepResult step(const WorldState& state,
                const std::array<WhiteAction, kNumAgents>& actions,
                const ArenaConfig& config);

// Global observation vector, layout (all components in [-1, 1]):
//   [6k+0..6k+5] for white k: x/size, y/size, hp/white_hp,
//                gun_cd/gun_cooldown, bomb_cd/bomb_cooldown, alive
//   [12..15]     red: sin(heading), cos(heading), hp/red_hp,
//                fire_cd/red_fire_cooldown
void observe_into(const WorldState& state, const ArenaConfig& config,
                  std::span<double> out);
std::vector<double> observe(const WorldState& state, const ArenaConfig& config);

}  // namespace mmpd
