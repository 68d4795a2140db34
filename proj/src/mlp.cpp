#include "mmpd/mlp.hpp"

#include <cmath>

#include "mmpd/errors.hpp"

namespace mmpd {

void MlpGradients::zero() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

double MlpGradients::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights)
    for (double v : w) s += v * v;
  for (const auto& b : biases)
    for (double v : b) s += v * v;
  return s;
}

void MlpGradients::scale(double s) {
  for (auto& w : weights)
    for (double& v : w) v *= s;
  for (auto& b : biases)
    for (double& v : b) v *= s;
}

Mlp::Mlp(std::vector<int> layer_sizes, Rng& rng) : sizes(std::move(layer_sizes)) {
  if (sizes.size() < 2) throw UsageError("Mlp: need at least input and output sizes");
  for (int s : sizes) {
    if (s <= 0) throw UsageError("Mlp: layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    weights.push_back(std::move(w));
    biases.emplace_back(out, 0.0);
  }
}

Mlp Mlp::zeros(std::vector<int> layer_sizes) {
  Mlp net;
  net.sizes = std::move(layer_sizes);
  for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    net.weights.emplace_back(
        static_cast<std::size_t>(net.sizes[l]) * net.sizes[l + 1], 0.0);
    net.biases.emplace_back(net.sizes[l + 1], 0.0);
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

void Mlp::forward_into(std::span<const double> input,
                       std::vector<double>& output) const {
  if (static_cast<int>(input.size()) != input_size()) {
    throw UsageError("Mlp::forward: input length " +
                     std::to_string(input.size()) + " != expected " +
                     std::to_string(input_size()));
  }
  // scratch kept across calls; this is the training hot path
  static thread_local std::vector<double> cur;
  static thread_local std::vector<double> next;
  cur.assign(input.begin(), input.end());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    const bool hidden = l + 1 < num_layers();
    next.assign(out, 0.0);
    const double* w = weights[l].data();
    for (int o = 0; o < out; ++o) {
      double z = biases[l][o];
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) z += row[i] * cur[i];
      next[o] = hidden ? std::tanh(z) : z;
    }
    cur.swap(next);
  }
  output.assign(cur.begin(), cur.end());
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  std::vector<double> out;
  forward_into(input, out);
  return out;
}

void Mlp::forward_cached(std::span<const double> input,
                         MlpActivations& acts) const {
  if (static_cast<int>(input.size()) != input_size()) {
    throw UsageError("Mlp::forward_cached: input length mismatch");
  }
  acts.layer_out.resize(num_layers() + 1);
  acts.layer_out[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    const bool hidden = l + 1 < num_layers();
    const std::vector<double>& a = acts.layer_out[l];
    std::vector<double>& o_vec = acts.layer_out[l + 1];
    o_vec.assign(out, 0.0);
    const double* w = weights[l].data();
    for (int o = 0; o < out; ++o) {
      double z = biases[l][o];
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) z += row[i] * a[i];
      o_vec[o] = hidden ? std::tanh(z) : z;
    }
  }
}

void Mlp::backward(const MlpActivations& acts, std::span<const double> dout,
                   MlpGradients& grads) const {
  if (acts.layer_out.size() != num_layers() + 1) {
    throw UsageError("Mlp::backward: activations do not match this net");
  }
  if (static_cast<int>(dout.size()) != output_size()) {
    throw UsageError("Mlp::backward: dout length mismatch");
  }
  static thread_local std::vector<double> delta;
  static thread_local std::vector<double> prev;
  delta.assign(dout.begin(), dout.end());
  for (std::size_t li = num_layers(); li-- > 0;) {
    const int in = sizes[li];
    const int out = sizes[li + 1];
    const std::vector<double>& a_prev = acts.layer_out[li];
    double* gw = grads.weights[li].data();
    double* gb = grads.biases[li].data();
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      double* row = gw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) row[i] += d * a_prev[i];
    }
    if (li == 0) break;
    // Propagate through the tanh of the previous (hidden) layer:
    // tanh'(z) = 1 - tanh(z)^2 and a_prev holds tanh(z).
    prev.assign(in, 0.0);
    const double* w = weights[li].data();
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    for (int i = 0; i < in; ++i) prev[i] *= 1.0 - a_prev[i] * a_prev[i];
    delta.swap(prev);
  }
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const auto& w : weights) g.weights.emplace_back(w.size(), 0.0);
  for (const auto& b : biases) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

void Mlp::apply_gradient(const MlpGradients& grads, double lr) {
  for (std::size_t l = 0; l < num_layers(); ++l) {
    for (std::size_t i = 0; i < weights[l].size(); ++i)
      weights[l][i] -= lr * grads.weights[l][i];
    for (std::size_t i = 0; i < biases[l].size(); ++i)
      biases[l][i] -= lr * grads.biases[l][i];
  }
}

double Mlp::get_parameter(std::size_t index) const {
  for (const auto& w : weights) {
    if (index < w.size()) return w[index];
    index -= w.size();
  }
  for (const auto& b : biases) {
    if (index < b.size()) return b[index];
    index -= b.size();
  }
  throw UsageError("Mlp::get_parameter: index out of range");
}

void Mlp::set_parameter(std::size_t index, double value) {
  for (auto& w : weights) {
    if (index < w.size()) {
      w[index] = value;
      return;
    }
    index -= w.size();
  }
  for (auto& b : biases) {
    if (index < b.size()) {
      b[index] = value;
      return;
    }
    index -= b.size();
  }
  throw UsageError("Mlp::set_parameter: index out of range");
}

bool Mlp::all_finite() const {
  for (const auto& w : weights)
    for (double v : w)
      if (!std::isfinite(v)) return false;
  for (const auto& b : biases)
    for (double v : b)
      if (!std::isfinite(v)) return false;
  return true;
}

bool same_shape(const Mlp& a, const Mlp& b) { return a.sizes == b.sizes; }

void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (!same_shape(target, online)) {
    throw UsageError("soft_update: network shapes differ");
  }
  for (std::size_t l = 0; l < target.num_layers(); ++l) {
    for (std::size_t i = 0; i < target.weights[l].size(); ++i) {
      target.weights[l][i] =
          (1.0 - tau) * target.weights[l][i] + tau * online.weights[l][i];
    }
    for (std::size_t i = 0; i < target.biases[l].size(); ++i) {
      target.biases[l][i] =
          (1.0 - tau) * target.biases[l][i] + tau * online.biases[l][i];
    }
  }
}

}  // namespace mmpd
