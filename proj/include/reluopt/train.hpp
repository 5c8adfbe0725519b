#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "reluopt/nn.hpp"

namespace reluopt::nn {

inline constexpr std::size_t kFeatures = 4;  // (x, x~, q, r)
using Sample = std::array<double, kFeatures>;

/// Raw (unnormalised) training data for the purchase-cost surrogate.
struct Dataset {
  std::vector<Sample> inputs;
  std::vector<double> outputs;

  std::size_t size() const { return outputs.size(); }
  void validate(double margin) const;
};

struct DatasetBounds {
  std::array<Range, kFeatures> features{Range{0.0, 10.0}, Range{0.0, 10.0}, Range{1.0, 8.0},
                                        Range{0.5, 5.0}};
};

inline constexpr double kDefaultMargin = 0.01;
inline constexpr std::size_t kFullSampleCount = 300000;

using Target = std::function<double(const Sample&)>;

/// Uniform samples inside `bounds` with x <= (1 - margin) * x~ enforced by
/// rejection; outputs are target(row).
Dataset make_dataset(const Target& target, const DatasetBounds& bounds, std::size_t n,
                     double margin, std::uint64_t seed);

void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in);

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 1000;
  std::size_t batch_size = 1000;
  double split = 0.8;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, normalised MSE
  std::vector<double> validation_loss;
  double train_rmse = 0.0;  // normalised units
  double validation_rmse = 0.0;
  double wall_time = 0.0;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
};

/// Minibatch Adam on normalised MSE. Sets the network's normalisation from the
/// data; convexified layers are projected onto W >= 0 after every step.
TrainReport fit(ReluNetwork& net, const Dataset& data, const TrainConfig& cfg);

/// Root-mean-square error of the network on `data` in normalised output units.
double normalized_rmse(const ReluNetwork& net, const Dataset& data);

}  // namespace reluopt::nn
