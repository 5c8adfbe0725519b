#include "reluopt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "nn_internal.hpp"
#include "reluopt/errors.hpp"

namespace reluopt::nn {

std::string kind_name(const NetworkKind& kind) {
  if (const auto* c = std::get_if<Convexified>(&kind)) {
    return "convexified(" + std::to_string(c->boundary) + ")";
  }
  return "unconstrained";
}

ReluNetwork::ReluNetwork(std::vector<std::size_t> layer_sizes, NetworkKind kind)
    : sizes_(std::move(layer_sizes)), kind_(kind) {
  if (sizes_.size() < 2) throw ShapeError("network needs at least an input and an output layer");
  for (std::size_t n : sizes_) {
    if (n == 0) throw ShapeError("layer sizes must be positive");
  }
  if (sizes_.back() != 1) throw ShapeError("network must have a single output");
  layers_.reserve(sizes_.size() - 1);
  for (std::size_t l = 1; l < sizes_.size(); ++l) layers_.emplace_back(sizes_[l - 1], sizes_[l]);
  input_norm.assign(sizes_.front(), Range{});
  set_kind(kind);
}

ReluNetwork ReluNetwork::random(std::vector<std::size_t> layer_sizes, NetworkKind kind,
                                std::uint64_t seed) {
  ReluNetwork net(std::move(layer_sizes), kind);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 1; l <= net.layers_.size(); ++l) {
    Dense& d = net.layer(l);
    const double s = std::sqrt(6.0 / static_cast<double>(d.inputs + d.outputs));
    std::uniform_real_distribution<double> dist(net.constrained_layer(l) ? 0.0 : -s, s);
    for (double& w : d.weights) w = dist(rng);
  }
  return net;
}

void ReluNetwork::set_kind(NetworkKind kind) {
  if (const auto* c = std::get_if<Convexified>(&kind)) {
    if (c->boundary < 1 || static_cast<std::size_t>(c->boundary) > layers_.size()) {
      throw ValidationError("convexification boundary k=" + std::to_string(c->boundary) +
                            " outside 1.." + std::to_string(layers_.size()));
    }
  }
  kind_ = kind;
}

int ReluNetwork::boundary() const {
  if (const auto* c = std::get_if<Convexified>(&kind_)) return c->boundary;
  return static_cast<int>(layers_.size());
}

bool ReluNetwork::constrained_layer(std::size_t l) const {
  return static_cast<int>(l) > boundary();
}

void ReluNetwork::project() {
  for (std::size_t l = 1; l <= layers_.size(); ++l) {
    if (!constrained_layer(l)) continue;
    for (double& w : layer(l).weights) w = std::max(w, 0.0);
  }
}

void ReluNetwork::validate() const {
  if (layers_.size() + 1 != sizes_.size()) throw ShapeError("layer count mismatch");
  for (std::size_t l = 1; l <= layers_.size(); ++l) {
    const Dense& d = layer(l);
    if (d.inputs != sizes_[l - 1] || d.outputs != sizes_[l] ||
        d.weights.size() != d.inputs * d.outputs || d.bias.size() != d.outputs) {
      throw ShapeError("layer " + std::to_string(l) + " does not match layer sizes");
    }
    for (double w : d.weights) {
      if (!std::isfinite(w)) throw ValidationError("non-finite weight in layer " + std::to_string(l));
      if (constrained_layer(l) && w < 0.0) {
        throw ValidationError("negative weight in constrained layer " + std::to_string(l));
      }
    }
    for (double b : d.bias) {
      if (!std::isfinite(b)) throw ValidationError("non-finite bias in layer " + std::to_string(l));
    }
  }
  if (input_norm.size() != sizes_.front()) throw ShapeError("input normalisation size mismatch");
  for (std::size_t i = 0; i < input_norm.size(); ++i) {
    if (!(input_norm[i].max > input_norm[i].min)) {
      throw ValidationError("input normalisation of feature " + std::to_string(i) +
                            " has max <= min");
    }
  }
  if (!(output_norm.max >= output_norm.min)) throw ValidationError("output normalisation has max < min");
}

std::size_t ReluNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const Dense& d : layers_) n += d.weights.size() + d.bias.size();
  return n;
}

namespace {

void check_input(const ReluNetwork& net, std::span<const double> z) {
  if (z.size() != net.input_size()) {
    throw ShapeError("input has " + std::to_string(z.size()) + " entries, network expects " +
                     std::to_string(net.input_size()));
  }
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError("non-finite network input");
  }
}

// out = relu?(W^T in + b)
void affine(const Dense& d, std::span<const double> in, std::vector<double>& out, bool relu) {
  out.assign(d.bias.begin(), d.bias.end());
  for (std::size_t i = 0; i < d.inputs; ++i) {
    const double a = in[i];
    if (a == 0.0) continue;
    const double* row = &d.weights[i * d.outputs];
    for (std::size_t j = 0; j < d.outputs; ++j) out[j] += row[j] * a;
  }
  if (relu) {
    for (double& v : out) v = std::max(v, 0.0);
  }
}

}  // namespace

double normalize_output(const ReluNetwork& net, double raw) {
  const double w = net.output_norm.width();
  return w > 0.0 ? (raw - net.output_norm.min) / w : 0.0;
}

double denormalize_output(const ReluNetwork& net, double normalized) {
  return net.output_norm.min + normalized * net.output_norm.width();
}

double evaluate_normalized(const ReluNetwork& net, std::span<const double> z,
                           std::vector<double>& a, std::vector<double>& b) {
  a.assign(z.begin(), z.end());
  const auto layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    affine(layers[l], a, b, l + 1 < layers.size());
    std::swap(a, b);
  }
  return a[0];
}

ForwardResult relu_forward(const ReluNetwork& net, std::span<const double> z) {
  check_input(net, z);
  std::vector<double> h(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const Range& r = net.input_norm[i];
    h[i] = (z[i] - r.min) / r.width();
  }
  ForwardResult result;
  const auto layers = net.layers();
  result.hidden.reserve(layers.size() - 1);
  std::vector<double> next;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const bool hidden = l + 1 < layers.size();
    affine(layers[l], h, next, hidden);
    std::swap(h, next);
    if (hidden) result.hidden.push_back(h);
  }
  result.output = denormalize_output(net, h[0]);
  return result;
}

double evaluate(const ReluNetwork& net, std::span<const double> z) {
  check_input(net, z);
  std::vector<double> scaled(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const Range& r = net.input_norm[i];
    scaled[i] = (z[i] - r.min) / r.width();
  }
  std::vector<double> a, b;
  return denormalize_output(net, evaluate_normalized(net, scaled, a, b));
}

ReluNetwork fold_normalization(const ReluNetwork& net) {
  ReluNetwork folded = net;
  Dense& first = folded.layer(1);
  for (std::size_t i = 0; i < first.inputs; ++i) {
    const double scale = 1.0 / net.input_norm[i].width();
    const double shift = net.input_norm[i].min;
    for (std::size_t j = 0; j < first.outputs; ++j) {
      const double w = first.w(i, j) * scale;
      first.w(i, j) = w;
      first.bias[j] -= w * shift;
    }
  }
  const std::size_t last = folded.hidden_layers() + 1;
  Dense& out = folded.layer(last);
  const double s = net.output_norm.width();
  for (double& w : out.weights) w *= s;
  for (double& b : out.bias) b = b * s + net.output_norm.min;
  folded.input_norm.assign(net.input_size(), Range{});
  folded.output_norm = Range{};
  return folded;
}

namespace detail {

std::vector<Dense> zero_like(const ReluNetwork& net) {
  std::vector<Dense> g;
  for (const Dense& d : net.layers()) g.emplace_back(d.inputs, d.outputs);
  return g;
}

double backprop(const ReluNetwork& net, std::span<const double> inputs,
                std::span<const double> targets, std::vector<Dense>& grads,
                BackpropWorkspace& ws) {
  const std::size_t n0 = net.input_size();
  const std::size_t count = targets.size();
  if (count == 0 || inputs.size() != count * n0) throw ShapeError("batch shape mismatch");
  if (grads.size() != net.layers().size()) grads = zero_like(net);
  for (Dense& g : grads) {
    std::fill(g.weights.begin(), g.weights.end(), 0.0);
    std::fill(g.bias.begin(), g.bias.end(), 0.0);
  }
  const auto layers = net.layers();
  const std::size_t depth = layers.size();
  ws.pre.resize(depth);
  ws.post.resize(depth + 1);

  double sse = 0.0;
  const double scale = 2.0 / static_cast<double>(count);
  for (std::size_t s = 0; s < count; ++s) {
    ws.post[0].assign(inputs.begin() + s * n0, inputs.begin() + (s + 1) * n0);
    for (std::size_t l = 0; l < depth; ++l) {
      affine(layers[l], ws.post[l], ws.pre[l], false);
      ws.post[l + 1] = ws.pre[l];
      if (l + 1 < depth) {
        for (double& v : ws.post[l + 1]) v = std::max(v, 0.0);
      }
    }
    const double err = ws.post[depth][0] - targets[s];
    sse += err * err;

    ws.delta.assign(1, scale * err);
    for (std::size_t l = depth; l-- > 0;) {
      const Dense& d = layers[l];
      Dense& g = grads[l];
      const auto& in = ws.post[l];
      for (std::size_t i = 0; i < d.inputs; ++i) {
        const double a = in[i];
        if (a == 0.0) continue;
        double* grow = &g.weights[i * d.outputs];
        for (std::size_t j = 0; j < d.outputs; ++j) grow[j] += a * ws.delta[j];
      }
      for (std::size_t j = 0; j < d.outputs; ++j) g.bias[j] += ws.delta[j];
      if (l == 0) break;
      ws.delta_prev.assign(d.inputs, 0.0);
      const auto& prev_pre = ws.pre[l - 1];
      for (std::size_t i = 0; i < d.inputs; ++i) {
        if (prev_pre[i] <= 0.0) continue;
        const double* row = &d.weights[i * d.outputs];
        double acc = 0.0;
        for (std::size_t j = 0; j < d.outputs; ++j) acc += row[j] * ws.delta[j];
        ws.delta_prev[i] = acc;
      }
      std::swap(ws.delta, ws.delta_prev);
    }
  }
  return sse / static_cast<double>(count);
}

}  // namespace detail

LossGrad loss_and_grad(const ReluNetwork& net, std::span<const double> inputs,
                       std::span<const double> targets) {
  LossGrad out;
  out.gradients = detail::zero_like(net);
  detail::BackpropWorkspace ws;
  out.mse = detail::backprop(net, inputs, targets, out.gradients, ws);
  return out;
}

}  // namespace reluopt::nn
