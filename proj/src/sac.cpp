#include "mmpd/sac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmpd/errors.hpp"

namespace mmpd {

std::vector<std::string> SacConfig::violations() const {
  std::vector<std::string> v;
  auto require = [&v](bool ok, const char* msg) {
    if (!ok) v.emplace_back(msg);
  };
  require(gamma >= 0.0 && gamma < 1.0, "gamma must be in [0, 1)");
  require(learning_rate > 0, "learning_rate must be > 0");
  require(tau > 0 && tau <= 1.0, "tau must be in (0, 1]");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(replay_capacity >= 1, "replay_capacity must be >= 1");
  require(alpha > 0, "alpha must be > 0");
  require(steps_per_update >= 1, "steps_per_update must be >= 1");
  require(updates_per_round >= 1, "updates_per_round must be >= 1");
  require(warmup_steps >= 0, "warmup_steps must be >= 0");
  require(!hidden_sizes.empty(), "hidden_sizes must not be empty");
  for (int h : hidden_sizes)
    require(h >= 1, "hidden_sizes entries must be >= 1");
  require(grad_clip_norm >= 0, "grad_clip_norm must be >= 0");
  require(optimizer == "sgd" || optimizer == "adam",
          "optimizer must be \"sgd\" or \"adam\"");
  require(train_steps >= 0, "train_steps must be >= 0");
  require(eval_episodes >= 1, "eval_episodes must be >= 1");
  require(eval_every_steps >= 1, "eval_every_steps must be >= 1");
  require(early_stop_win_rate >= 0 && early_stop_win_rate <= 1.0,
          "early_stop_win_rate must be in [0, 1]");
  require(demo_episodes >= 1, "demo_episodes must be >= 1");
  return v;
}

void SacConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid sac config:";
  for (const auto& s : v) msg += " " + s + ";";
  throw ConfigError(msg);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw UsageError("ReplayBuffer: capacity must be > 0");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[write_] = std::move(t);
  }
  write_ = (write_ + 1) % capacity_;
}

void ReplayBuffer::sample_into(int batch, Rng& rng,
                               std::vector<Transition>& out) const {
  if (data_.empty()) throw UsageError("ReplayBuffer: sampling from empty buffer");
  out.clear();
  out.reserve(batch);
  for (int i = 0; i < batch; ++i) {
    out.push_back(data_[rng.uniform_int(static_cast<int>(data_.size()))]);
  }
}

PolicyParams init_policy(const SacConfig& config, std::uint64_t seed,
                         const ActionMask& mask) {
  config.validate();
  std::vector<int> sizes;
  sizes.push_back(kObservationSize);
  for (int h : config.hidden_sizes) sizes.push_back(h);
  sizes.push_back(kNumActions);

  PolicyParams params;
  params.alpha = config.alpha;
  params.action_mask = mask;
  params.config = config;
  Rng rng(derive_seed(seed, 0xA11C));
  for (int k = 0; k < kNumAgents; ++k) {
    AgentNets& nets = params.agents[k];
    nets.actor = Mlp(sizes, rng);
    nets.q1 = Mlp(sizes, rng);
    nets.q2 = Mlp(sizes, rng);
    nets.q1_target = nets.q1;
    nets.q2_target = nets.q2;
  }
  return params;
}

bool all_finite(const PolicyParams& params) {
  for (const auto& nets : params.agents) {
    if (!nets.actor.all_finite() || !nets.q1.all_finite() ||
        !nets.q2.all_finite() || !nets.q1_target.all_finite() ||
        !nets.q2_target.all_finite())
      return false;
  }
  return std::isfinite(params.alpha);
}

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct Dist {
  std::array<double, kNumActions> p{};
  std::array<double, kNumActions> logp{};  // valid only where allowed
};

Dist masked_softmax(std::span<const double> logits, const ActionMask& mask) {
  Dist d;
  double mx = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < kNumActions; ++a) {
    if (mask[a]) mx = std::max(mx, logits[a]);
  }
  if (!std::isfinite(mx)) {
    throw UsageError("policy_distribution: action mask allows no action");
  }
  double sum = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    if (!mask[a]) continue;
    d.p[a] = std::exp(logits[a] - mx);
    sum += d.p[a];
  }
  const double logsum = std::log(sum);
  for (int a = 0; a < kNumActions; ++a) {
    if (!mask[a]) continue;
    d.p[a] /= sum;
    d.logp[a] = logits[a] - mx - logsum;
  }
  return d;
}

// Bootstrap targets y_i = r + gamma * (1 - done) * E_pi[min(Q1t, Q2t) - alpha*log pi].
void compute_targets(const PolicyParams& params,
                     std::span<const Transition> batch, int agent,
                     std::vector<double>& y) {
  const AgentNets& nets = params.agents[agent];
  const SacConfig& cfg = params.config;
  y.resize(batch.size());
  std::vector<double> logits, q1t, q2t;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& tr = batch[i];
    if (tr.done) {
      y[i] = tr.reward;
      continue;
    }
    nets.actor.forward_into(tr.next_state, logits);
    const Dist d = masked_softmax(logits, params.action_mask);
    nets.q1_target.forward_into(tr.next_state, q1t);
    nets.q2_target.forward_into(tr.next_state, q2t);
    double v = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      if (!params.action_mask[a]) continue;
      v += d.p[a] * (std::min(q1t[a], q2t[a]) - params.alpha * d.logp[a]);
    }
    y[i] = tr.reward + cfg.gamma * v;
  }
}

// MSE of Q(s, a_agent) against y; fills grads when non-null.
double critic_pass(const Mlp& q, std::span<const Transition> batch, int agent,
                   const std::vector<double>& y, MlpGradients* grads) {
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  MlpActivations acts;
  std::vector<double> out;
  std::vector<double> dout(q.output_size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& tr = batch[i];
    const int a = tr.actions[agent];
    double qa;
    if (grads != nullptr) {
      q.forward_cached(tr.state, acts);
      qa = acts.layer_out.back()[a];
    } else {
      q.forward_into(tr.state, out);
      qa = out[a];
    }
    const double e = qa - y[i];
    loss += e * e;
    if (grads != nullptr) {
      std::fill(dout.begin(), dout.end(), 0.0);
      dout[a] = 2.0 * e * inv_b;
      q.backward(acts, dout, *grads);
    }
  }
  return loss * inv_b;
}

// Expected actor loss E_pi[alpha*log pi - min(Q1, Q2)]; fills grads when
// non-null. The per-logit gradient is p_b * (f_b - L_i) with
// f_a = alpha*log p_a - min(Q1, Q2)(s, a).
double actor_pass(const PolicyParams& params, std::span<const Transition> batch,
                  int agent, MlpGradients* grads, double* mean_entropy) {
  const AgentNets& nets = params.agents[agent];
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  double entropy = 0.0;
  MlpActivations acts;
  std::vector<double> logits, q1o, q2o;
  std::vector<double> dlogits(kNumActions, 0.0);
  for (const Transition& tr : batch) {
    nets.q1.forward_into(tr.state, q1o);
    nets.q2.forward_into(tr.state, q2o);
    Dist d;
    if (grads != nullptr) {
      nets.actor.forward_cached(tr.state, acts);
      d = masked_softmax(acts.layer_out.back(), params.action_mask);
    } else {
      nets.actor.forward_into(tr.state, logits);
      d = masked_softmax(logits, params.action_mask);
    }
    std::array<double, kNumActions> f{};
    double li = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      if (!params.action_mask[a]) continue;
      f[a] = params.alpha * d.logp[a] - std::min(q1o[a], q2o[a]);
      li += d.p[a] * f[a];
      entropy -= d.p[a] * d.logp[a];
    }
    loss += li;
    if (grads != nullptr) {
      for (int a = 0; a < kNumActions; ++a) {
        dlogits[a] = params.action_mask[a] ? d.p[a] * (f[a] - li) * inv_b : 0.0;
      }
      nets.actor.backward(acts, dlogits, *grads);
    }
  }
  if (mean_entropy != nullptr) *mean_entropy = entropy * inv_b;
  return loss * inv_b;
}

// Clips to max_norm (0 disables) and returns the pre-clip norm.
double clip_gradient(MlpGradients& g, double max_norm) {
  const double norm = std::sqrt(g.squared_norm());
  if (!std::isfinite(norm)) {
    throw TrainingError("non-finite gradient norm during sac_update");
  }
  if (max_norm > 0 && norm > max_norm) g.scale(max_norm / norm);
  return norm;
}

void apply_step(Mlp& net, const MlpGradients& g, const SacConfig& cfg,
                AdamState* adam) {
  if (cfg.optimizer == "sgd") {
    net.apply_gradient(g, cfg.learning_rate);
    return;
  }
  if (adam == nullptr) {
    throw UsageError("sac_update: adam optimizer requires OptimizerState");
  }
  adam->t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam->t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam->t));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto update = [&](std::vector<double>& p, const std::vector<double>& gv,
                      std::vector<double>& m, std::vector<double>& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * gv[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * gv[i] * gv[i];
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        p[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + kAdamEps);
      }
    };
    update(net.weights[l], g.weights[l], adam->m.weights[l], adam->v.weights[l]);
    update(net.biases[l], g.biases[l], adam->m.biases[l], adam->v.biases[l]);
  }
}

}  // namespace

std::vector<double> policy_distribution(const PolicyParams& params, int agent,
                                        std::span<const double> state) {
  if (agent < 0 || agent >= kNumAgents) {
    throw UsageError("policy_distribution: agent index out of range");
  }
  const std::vector<double> logits = params.agents[agent].actor.forward(state);
  const Dist d = masked_softmax(logits, params.action_mask);
  return std::vector<double>(d.p.begin(), d.p.end());
}

int act(const PolicyParams& params, int agent, std::span<const double> state,
        ActMode mode, Rng* rng) {
  const std::vector<double> probs = policy_distribution(params, agent, state);
  if (mode == ActMode::Greedy) {
    int best = -1;
    for (int a = 0; a < kNumActions; ++a) {
      if (!params.action_mask[a]) continue;
      if (best < 0 || probs[a] > probs[best]) best = a;
    }
    return best;
  }
  if (rng == nullptr) throw UsageError("act: Sample mode requires an RNG");
  return rng->categorical(probs);
}

OptimizerState make_optimizer_state(const PolicyParams& params) {
  OptimizerState st;
  for (int k = 0; k < kNumAgents; ++k) {
    const AgentNets& nets = params.agents[k];
    auto make = [](const Mlp& net) {
      return AdamState{net.zero_gradients(), net.zero_gradients(), 0};
    };
    st.agents[k].actor = make(nets.actor);
    st.agents[k].q1 = make(nets.q1);
    st.agents[k].q2 = make(nets.q2);
  }
  return st;
}

SacLosses sac_losses(const PolicyParams& params,
                     std::span<const Transition> batch, int agent) {
  if (batch.empty()) throw UsageError("sac_losses: batch must be nonempty");
  std::vector<double> y;
  compute_targets(params, batch, agent, y);
  SacLosses losses;
  losses.critic1 = critic_pass(params.agents[agent].q1, batch, agent, y, nullptr);
  losses.critic2 = critic_pass(params.agents[agent].q2, batch, agent, y, nullptr);
  losses.actor = actor_pass(params, batch, agent, nullptr, nullptr);
  return losses;
}

LossReport sac_update(PolicyParams& params, std::span<const Transition> batch,
                      int agent, OptimizerState* opt) {
  if (batch.empty()) throw UsageError("sac_update: batch must be nonempty");
  if (agent < 0 || agent >= kNumAgents) {
    throw UsageError("sac_update: agent index out of range");
  }
  const SacConfig& cfg = params.config;
  AgentNets& nets = params.agents[agent];
  AgentOptimizerState* agent_opt =
      opt != nullptr ? &opt->agents[agent] : nullptr;

  LossReport report;
  std::vector<double> y;
  compute_targets(params, batch, agent, y);

  MlpGradients g1 = nets.q1.zero_gradients();
  report.losses.critic1 = critic_pass(nets.q1, batch, agent, y, &g1);
  report.grad_norm_critic1 = clip_gradient(g1, cfg.grad_clip_norm);
  MlpGradients g2 = nets.q2.zero_gradients();
  report.losses.critic2 = critic_pass(nets.q2, batch, agent, y, &g2);
  report.grad_norm_critic2 = clip_gradient(g2, cfg.grad_clip_norm);
  apply_step(nets.q1, g1, cfg, agent_opt ? &agent_opt->q1 : nullptr);
  apply_step(nets.q2, g2, cfg, agent_opt ? &agent_opt->q2 : nullptr);

  MlpGradients ga = nets.actor.zero_gradients();
  report.losses.actor =
      actor_pass(params, batch, agent, &ga, &report.mean_entropy);
  report.grad_norm_actor = clip_gradient(ga, cfg.grad_clip_norm);
  apply_step(nets.actor, ga, cfg, agent_opt ? &agent_opt->actor : nullptr);

  soft_update(nets.q1_target, nets.q1, cfg.tau);
  soft_update(nets.q2_target, nets.q2, cfg.tau);

  if (!std::isfinite(report.losses.critic1) ||
      !std::isfinite(report.losses.critic2) ||
      !std::isfinite(report.losses.actor)) {
    throw TrainingError(
        "non-finite loss in sac_update: critic1=" +
        std::to_string(report.losses.critic1) +
        " critic2=" + std::to_string(report.losses.critic2) +
        " actor=" + std::to_string(report.losses.actor));
  }
  return report;
}

}  // namespace mmpd
