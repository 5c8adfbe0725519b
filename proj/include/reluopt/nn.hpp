#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace reluopt::nn {

/// Fully connected layer. `weights` is inputs x outputs, row-major, so the
/// pre-activation of unit j is sum_i weights[i * outputs + j] * in[i] + bias[j].
struct Dense {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  Dense() = default;
  Dense(std::size_t in, std::size_t out)
      : inputs(in), outputs(out), weights(in * out, 0.0), bias(out, 0.0) {}

  double& w(std::size_t i, std::size_t j) { return weights[i * outputs + j]; }
  double w(std::size_t i, std::size_t j) const { return weights[i * outputs + j]; }
};

struct Unconstrained {};

/// Weights of layers boundary+1 .. L+1 are element-wise non-negative.
struct Convexified {
  int boundary = 1;
};

using NetworkKind = std::variant<Unconstrained, Convexified>;

std::string kind_name(const NetworkKind& kind);

/// Closed interval used for min-max normalisation and bound propagation.
struct Range {
  double min = 0.0;
  double max = 1.0;

  double width() const { return max - min; }
};

class ReluNetwork {
 public:
  ReluNetwork() = default;

  /// Zero-initialised network with identity normalisation.
  /// `layer_sizes` = {n0, n1, ..., nL, 1}.
  explicit ReluNetwork(std::vector<std::size_t> layer_sizes,
                       NetworkKind kind = Unconstrained{});

  /// Fan-based uniform initialisation; constrained layers draw from [0, s].
  static ReluNetwork random(std::vector<std::size_t> layer_sizes, NetworkKind kind,
                            std::uint64_t seed);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  /// Number of hidden ReLU layers, L.
  std::size_t hidden_layers() const { return layers_.size() - 1; }

  /// Layers indexed 1..L+1 as in the usual notation; layer(L+1) is the output map.
  Dense& layer(std::size_t l) { return layers_.at(l - 1); }
  const Dense& layer(std::size_t l) const { return layers_.at(l - 1); }
  std::span<Dense> layers() { return layers_; }
  std::span<const Dense> layers() const { return layers_; }

  const NetworkKind& kind() const { return kind_; }
  void set_kind(NetworkKind kind);
  bool is_convexified() const { return std::holds_alternative<Convexified>(kind_); }
  /// Convexification boundary k, or L+1 for an unconstrained network.
  int boundary() const;
  /// True when layer l (1-based) must keep non-negative weights.
  bool constrained_layer(std::size_t l) const;

  std::vector<Range> input_norm;
  Range output_norm;

  /// Clamp every constrained weight to >= 0.
  void project();

  /// Throws ValidationError / ShapeError on any broken invariant.
  void validate() const;

  std::size_t parameter_count() const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Dense> layers_;
  NetworkKind kind_ = Unconstrained{};
};

struct ForwardResult {
  double output = 0.0;
  /// Post-activation vectors h_1..h_L in normalised units.
  std::vector<std::vector<double>> hidden;
};

/// Forward pass on a raw input: normalise, propagate, denormalise.
ForwardResult relu_forward(const ReluNetwork& net, std::span<const double> z);

/// Output only; avoids allocating the hidden activations.
double evaluate(const ReluNetwork& net, std::span<const double> z);

/// Forward pass in normalised units (no input/output scaling).
double evaluate_normalized(const ReluNetwork& net, std::span<const double> z,
                           std::vector<double>& scratch_a, std::vector<double>& scratch_b);

double normalize_output(const ReluNetwork& net, double raw);
double denormalize_output(const ReluNetwork& net, double normalized);

/// Raw-space network: first layer absorbs the input scaling, output layer the
/// output scaling. Normalisation of the result is the identity.
ReluNetwork fold_normalization(const ReluNetwork& net);

struct LossGrad {
  double mse = 0.0;
  std::vector<Dense> gradients;
};

/// Mean-squared error and its exact gradient over a batch given in normalised
/// units. `inputs` is count x n0 row-major; `targets` has length count.
LossGrad loss_and_grad(const ReluNetwork& net, std::span<const double> inputs,
                       std::span<const double> targets);

}  // namespace reluopt::nn
