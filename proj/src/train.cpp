#include "reluopt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "nn_internal.hpp"
#include "reluopt/errors.hpp"
#include "reluopt/kernels.hpp"

namespace reluopt::nn {

void Dataset::validate(double margin) const {
  if (inputs.size() != outputs.size()) throw ShapeError("dataset input/output row counts differ");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Sample& s = inputs[i];
    for (double v : s) {
      if (!std::isfinite(v)) throw ValidationError("non-finite input in row " + std::to_string(i));
    }
    if (!std::isfinite(outputs[i])) throw ValidationError("non-finite output in row " + std::to_string(i));
    if (s[0] > (1.0 - margin) * s[1]) {
      throw ValidationError("row " + std::to_string(i) + " violates x <= (1 - margin) * xtilde");
    }
  }
}

Dataset make_dataset(const Target& target, const DatasetBounds& bounds, std::size_t n,
                     double margin, std::uint64_t seed) {
  if (n == 0) throw ValidationError("dataset size must be at least 1");
  if (!(margin >= 0.0 && margin < 1.0)) throw ValidationError("margin must lie in [0, 1)");
  for (std::size_t f = 0; f < kFeatures; ++f) {
    if (!(bounds.features[f].min < bounds.features[f].max)) {
      throw ValidationError("feature " + std::to_string(f) + " bounds need lo < hi");
    }
  }
  const Range& xr = bounds.features[0];
  const Range& xt = bounds.features[1];
  if (xr.min >= (1.0 - margin) * xt.max) {
    throw DomainError("infeasible bounds: x range lies entirely above the scaled xtilde range");
  }

  std::mt19937_64 rng(seed);
  std::array<std::uniform_real_distribution<double>, kFeatures> dist;
  for (std::size_t f = 0; f < kFeatures; ++f) {
    dist[f] = std::uniform_real_distribution<double>(bounds.features[f].min, bounds.features[f].max);
  }
  Dataset data;
  data.inputs.reserve(n);
  data.outputs.reserve(n);
  constexpr int kMaxAttempts = 1'000'000;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s{};
    int attempts = 0;
    do {
      if (++attempts > kMaxAttempts) throw DomainError("rejection sampling failed: feasible region too small");
      s[0] = dist[0](rng);
      s[1] = dist[1](rng);
    } while (s[0] > (1.0 - margin) * s[1]);
    s[2] = dist[2](rng);
    s[3] = dist[3](rng);
    data.inputs.push_back(s);
    data.outputs.push_back(target(s));
  }
  return data;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "x,xtilde,q,r,cost\n";
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.inputs[i]) {
      std::snprintf(buf, sizeof buf, "%.17g,", v);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", data.outputs[i]);
    out << buf;
  }
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,xtilde,q,r,cost") throw IoError("dataset: unexpected header '" + line + "'");
  Dataset data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, kFeatures + 1> v{};
    std::size_t pos = 0;
    for (std::size_t f = 0; f <= kFeatures; ++f) {
      const std::size_t end = line.find(',', pos);
      const bool last = f == kFeatures;
      if (last != (end == std::string::npos)) {
        throw IoError("dataset line " + std::to_string(lineno) + ": expected 5 fields");
      }
      const std::string field = line.substr(pos, last ? std::string::npos : end - pos);
      char* stop = nullptr;
      v[f] = std::strtod(field.c_str(), &stop);
      if (field.empty() || *stop != '\0') {
        throw IoError("dataset line " + std::to_string(lineno) + ": bad number '" + field + "'");
      }
      pos = end + 1;
    }
    data.inputs.push_back({v[0], v[1], v[2], v[3]});
    data.outputs.push_back(v[4]);
  }
  return data;
}

void TrainConfig::validate() const {
  if (!(split > 0.0 && split < 1.0)) throw ValidationError("split must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (epochs < 0) throw ValidationError("epochs must be non-negative");
}

namespace {

struct Normalized {
  std::vector<double> x;  // N x n0
  std::vector<double> y;
};

Normalized normalize(const ReluNetwork& net, const Dataset& data) {
  Normalized out;
  out.x.resize(data.size() * kFeatures);
  out.y.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t f = 0; f < kFeatures; ++f) {
      const Range& r = net.input_norm[f];
      out.x[i * kFeatures + f] = (data.inputs[i][f] - r.min) / r.width();
    }
    out.y[i] = normalize_output(net, data.outputs[i]);
  }
  return out;
}

double subset_mse(const ReluNetwork& net, const Normalized& d, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  std::vector<double> x(idx.size() * kFeatures);
  std::vector<double> y(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(&d.x[idx[k] * kFeatures], kFeatures, &x[k * kFeatures]);
  }
  kernels::forward_batch_omp(net, x, y);
  double sse = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double e = y[k] - d.y[idx[k]];
    sse += e * e;
  }
  return sse / static_cast<double>(idx.size());
}

class Adam {
 public:
  Adam(const ReluNetwork& net, const TrainConfig& cfg)
      : cfg_(cfg), m_(detail::zero_like(net)), v_(detail::zero_like(net)) {}

  void step(ReluNetwork& net, const std::vector<Dense>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    auto layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weights, grads[l].weights, m_[l].weights, v_[l].weights, c1, c2);
      update(layers[l].bias, grads[l].bias, m_[l].bias, v_[l].bias, c1, c2);
    }
  }

 private:
  void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
              std::vector<double>& v, double c1, double c2) const {
    const double b1 = cfg_.adam_beta1;
    const double b2 = cfg_.adam_beta2;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
    }
  }

  TrainConfig cfg_;
  std::vector<Dense> m_;
  std::vector<Dense> v_;
  long long t_ = 0;
};

}  // namespace

TrainReport fit(ReluNetwork& net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (net.input_size() != kFeatures) {
    throw ShapeError("network input size " + std::to_string(net.input_size()) +
                     " does not match dataset width " + std::to_string(kFeatures));
  }
  if (data.size() < 2) throw ValidationError("dataset needs at least two rows");
  if (data.inputs.size() != data.outputs.size()) throw ShapeError("dataset row counts differ");
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t f = 0; f < kFeatures; ++f) {
    Range r{data.inputs[0][f], data.inputs[0][f]};
    for (const Sample& s : data.inputs) {
      r.min = std::min(r.min, s[f]);
      r.max = std::max(r.max, s[f]);
    }
    if (!(r.max > r.min)) throw ValidationError("degenerate dataset: feature " + std::to_string(f) + " is constant");
    net.input_norm[f] = r;
  }
  const auto [ymin, ymax] = std::minmax_element(data.outputs.begin(), data.outputs.end());
  net.output_norm = Range{*ymin, *ymax};
  net.project();

  const Normalized norm = normalize(net, data);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(cfg.split * static_cast<double>(data.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, data.size() - 1);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> validation(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

  TrainReport report;
  report.train_size = train.size();
  report.validation_size = validation.size();
  report.train_loss.reserve(static_cast<std::size_t>(cfg.epochs));
  report.validation_loss.reserve(static_cast<std::size_t>(cfg.epochs));

  Adam adam(net, cfg);
  std::vector<Dense> grads = detail::zero_like(net);
  detail::BackpropWorkspace ws;
  std::vector<double> bx, by;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double weighted = 0.0;
    for (std::size_t begin = 0; begin < train.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(train.size(), begin + cfg.batch_size);
      const std::size_t count = end - begin;
      bx.resize(count * kFeatures);
      by.resize(count);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t row = train[begin + k];
        std::copy_n(&norm.x[row * kFeatures], kFeatures, &bx[k * kFeatures]);
        by[k] = norm.y[row];
      }
      const double mse = detail::backprop(net, bx, by, grads, ws);
      if (!std::isfinite(mse)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              ": non-finite loss");
      }
      weighted += mse * static_cast<double>(count);
      adam.step(net, grads);
      net.project();
    }
    report.train_loss.push_back(weighted / static_cast<double>(train.size()));
    report.validation_loss.push_back(subset_mse(net, norm, validation));
  }

  report.train_rmse = std::sqrt(subset_mse(net, norm, train));
  report.validation_rmse = std::sqrt(subset_mse(net, norm, validation));
  if (!std::isfinite(report.train_rmse)) throw DivergenceError("training produced a non-finite RMSE");
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double normalized_rmse(const ReluNetwork& net, const Dataset& data) {
  const Normalized norm = normalize(net, data);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return std::sqrt(subset_mse(net, norm, all));
}

}  // namespace reluopt::nn
