#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmpd/rng.hpp"

namespace mmpd {

// Parameter gradients, same shapes as Mlp::weights / Mlp::biases.
struct MlpGradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  void zero();
  double squared_norm() const;
  void scale(double s);
};

// Layer activations captured during a forward pass, consumed by backward().
// layer_out[0] is the input; layer_out[l+1] the output of layer l.
struct MlpActivations {
  std::vector<std::vector<double>> layer_out;
};

// Fully-connected network: tanh hidden layers, linear output.
// weights[l] is row-major [out x in].
struct Mlp {
  std::vector<int> sizes;  // input, hidden..., output
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  Mlp() = default;
  // Weights uniform in ±1/sqrt(fan_in), biases zero.
  Mlp(std::vector<int> layer_sizes, Rng& rng);
  static Mlp zeros(std::vector<int> layer_sizes);

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t parameter_count() const;

  void forward_into(std::span<const double> input,
                    std::vector<double>& output) const;
  std::vector<double> forward(std::span<const double> input) const;

  void forward_cached(std::span<const double> input,
                      MlpActivations& acts) const;

  // Accumulates dLoss/dparams into grads given dLoss/doutput.
  void backward(const MlpActivations& acts, std::span<const double> dout,
                MlpGradients& grads) const;

  MlpGradients zero_gradients() const;

  // params -= lr * grads
  void apply_gradient(const MlpGradients& grads, double lr);

  // Flat parameter view (weights then biases, layer by layer); used by
  // finite-difference checks and serialization helpers.
  double get_parameter(std::size_t index) const;
  void set_parameter(std::size_t index, double value);

  bool all_finite() const;
  bool operator==(const Mlp&) const = default;
};

bool same_shape(const Mlp& a, const Mlp& b);

// target = (1 - tau) * target + tau * online, parameterwise.
void soft_update(Mlp& target, const Mlp& online, double tau);

}  // namespace mmpd
