#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmpd/arena.hpp"
#include "mmpd/mlp.hpp"
#include "mmpd/rng.hpp"

namespace mmpd {

// Training hyperparameters for the per-agent discrete soft actor-critic.
struct SacConfig {
  double gamma = 0.99;
  double learning_rate = 3e-4;
  double tau = 0.005;
  int batch_size = 128;
  int replay_capacity = 100000;
  double alpha = 0.05;  // fixed entropy coefficient
  int steps_per_update = 1;
  int updates_per_round = 1;
  int warmup_steps = 1000;
  std::vector<int> hidden_sizes = {64, 64};
  double grad_clip_norm = 10.0;
  std::string optimizer = "adam";  // "adam" or "sgd"

  // Run-scale knobs used by the training loop.
  long train_steps = 150000;
  int eval_episodes = 100;
  long eval_every_steps = 10000;
  double early_stop_win_rate = 0.0;  // 0 disables early stopping
  int demo_episodes = 50;

  std::vector<std::string> violations() const;
  void validate() const;
  bool operator==(const SacConfig&) const = default;
};

using ActionMask = std::array<bool, kNumActions>;

constexpr ActionMask all_actions_allowed() {
  return {true, true, true, true, true, true, true};
}

// One shared-reward step as stored in replay and demonstration buffers.
struct Transition {
  std::vector<double> state;
  std::array<int, kNumAgents> actions{};
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
  bool operator==(const Transition&) const = default;
};

// Bounded FIFO ring; uniform sampling with the caller's RNG.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

  // Uniform with replacement into out (cleared first).
  void sample_into(int batch, Rng& rng, std::vector<Transition>& out) const;

 private:
  std::vector<Transition> data_;
  std::size_t capacity_;
  std::size_t write_ = 0;
};

struct AgentNets {
  Mlp actor;  // state -> kNumActions logits
  Mlp q1, q2;
  Mlp q1_target, q2_target;
  bool operator==(const AgentNets&) const = default;
};

// Trainable state of one joint-policy: independent actor + twin critics
// per agent, a fixed entropy coefficient and the action mask the policy
// was trained under.
struct PolicyParams {
  std::array<AgentNets, kNumAgents> agents;
  double alpha = 0.05;
  ActionMask action_mask = all_actions_allowed();
  SacConfig config;  // echo of the training configuration

  bool operator==(const PolicyParams&) const = default;
};

PolicyParams init_policy(const SacConfig& config, std::uint64_t seed,
                         const ActionMask& mask = all_actions_allowed());

bool all_finite(const PolicyParams& params);

// Masked softmax over the actor logits; disallowed actions get probability
// zero, allowed probabilities are positive and sum to 1.
std::vector<double> policy_distribution(const PolicyParams& params, int agent,
                                        std::span<const double> state);

enum class ActMode { Greedy, Sample };

// Greedy: lowest-index maximizer of the action probabilities.
// Sample: categorical draw using the provided RNG.
int act(const PolicyParams& params, int agent, std::span<const double> state,
        ActMode mode, Rng* rng = nullptr);

inline int greedy_action(const PolicyParams& params, int agent,
                         std::span<const double> state) {
  return act(params, agent, state, ActMode::Greedy);
}

// Adam moment buffers per network; t counts applied steps.
struct AdamState {
  MlpGradients m, v;
  long t = 0;
};

struct AgentOptimizerState {
  AdamState actor, q1, q2;
};

struct OptimizerState {
  std::array<AgentOptimizerState, kNumAgents> agents;
};

OptimizerState make_optimizer_state(const PolicyParams& params);

struct SacLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
};

// Loss values only, no parameter change. Shares the exact loss definitions
// with sac_update; used for logging and finite-difference checks.
SacLosses sac_losses(const PolicyParams& params,
                     std::span<const Transition> batch, int agent);

struct LossReport {
  SacLosses losses;
  double mean_entropy = 0.0;
  double grad_norm_actor = 0.0;
  double grad_norm_critic1 = 0.0;
  double grad_norm_critic2 = 0.0;
};

// One gradient step on both critics and the actor of the given agent,
// followed by the soft target update. The other agent is treated as part
// of the environment. opt may be null when config.optimizer == "sgd".
LossReport sac_update(PolicyParams& params, std::span<const Transition> batch,
                      int agent, OptimizerState* opt = nullptr);

}  // namespace mmpd
