#pragma once

#include <span>
#include <vector>

#include "reluopt/nn.hpp"

namespace reluopt::nn::detail {

/// Scratch buffers reused across backprop calls.
struct BackpropWorkspace {
  std::vector<std::vector<double>> pre;   // per layer pre-activation
  std::vector<std::vector<double>> post;  // per layer activation (post[0] = input)
  std::vector<double> delta;
  std::vector<double> delta_prev;
};

/// Zero `grads`, then accumulate the batch-mean MSE gradient into it.
/// Returns the batch MSE.
double backprop(const ReluNetwork& net, std::span<const double> inputs,
                std::span<const double> targets, std::vector<Dense>& grads,
                BackpropWorkspace& ws);

std::vector<Dense> zero_like(const ReluNetwork& net);

}  // namespace reluopt::nn::detail
