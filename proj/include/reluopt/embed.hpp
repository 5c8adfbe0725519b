#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reluopt/model.hpp"
#include "reluopt/nn.hpp"

namespace reluopt::embed {

/// One network input: either a model variable or a known constant.
struct NetInput {
  std::optional<opt::VarId> var;
  double value = 0.0;

  static NetInput variable(opt::VarId v) { return NetInput{v, 0.0}; }
  static NetInput constant(double c) { return NetInput{std::nullopt, c}; }
};

/// Where a network sits inside a model. `prefix` keeps names unique when the
/// same network is embedded several times.
///
/// With `output_at_least` the output row is output >= W h + b instead of an
/// equality; a minimised, non-negative output then equals max(f, 0).
struct NetBinding {
  std::vector<NetInput> inputs;
  opt::VarId output;
  std::string prefix;
  bool output_at_least = false;
};

/// Input box for interval propagation, one range per network input.
using Box = std::vector<nn::Range>;

/// What a builder added. `bounds` counts simple variable bounds (h >= 0) that
/// the simplex engine handles implicitly rather than as rows.
struct EmbeddingStats {
  std::size_t variables = 0;
  std::size_t rows = 0;
  std::size_t bounds = 0;
  std::size_t binaries = 0;

  EmbeddingStats& operator+=(const EmbeddingStats& o) {
    variables += o.variables;
    rows += o.rows;
    bounds += o.bounds;
    binaries += o.binaries;
    return *this;
  }
};

/// Penalty coefficients, one vector per hidden layer with one entry per neuron.
using Penalty = std::vector<std::vector<double>>;

/// Expands one coefficient per hidden layer to every neuron of that layer.
Penalty layer_penalty(const nn::ReluNetwork& net, const std::vector<double>& per_layer);
/// Same coefficient everywhere.
Penalty uniform_penalty(const nn::ReluNetwork& net, double alpha);

struct PenaltyEmbedding {
  EmbeddingStats stats;
  /// Sum of alpha * h, to be added to a minimisation objective.
  std::vector<opt::Term> penalty;
};

/// Triangle cap h <= k1 * pre + k2 through (lb, 0) and (ub, ub).
struct TriangleCap {
  double k1 = 0.0;
  double k2 = 0.0;
};
TriangleCap triangle_cap(double lb, double ub);

/// Pre-activation intervals of layers 1..L+1 (the last entry is the output),
/// by interval arithmetic on the raw-space network. Constant inputs should
/// be given as degenerate ranges.
std::vector<std::vector<nn::Range>> propagate_bounds(const nn::ReluNetwork& net, const Box& box);

// All builders fold the network's normalisation first, so inputs and output
// are in raw units.

/// LP embedding of a Convexified(1) network. Exact when the output is minimised.
EmbeddingStats embed_cvxd(opt::OptModel& model, const nn::ReluNetwork& net, const NetBinding& at);

/// Big-M on layers 1..k-1, inequalities on layers k..L. The network must be
/// convexified with boundary <= k (any network for k = L+1). k = 1 is embed_cvxd.
EmbeddingStats embed_hybrid(opt::OptModel& model, const nn::ReluNetwork& net, int k, const Box& box,
                            const NetBinding& at);

/// Exact mixed-binary embedding with per-neuron constants from propagate_bounds.
EmbeddingStats embed_bigm(opt::OptModel& model, const nn::ReluNetwork& net, const Box& box,
                          const NetBinding& at);

/// Penalised relaxation: h >= pre, h >= 0 on every layer, for any network.
PenaltyEmbedding embed_pcar(opt::OptModel& model, const nn::ReluNetwork& net, const Penalty& alpha,
                            const NetBinding& at);

/// embed_pcar plus the triangle cap on every hidden neuron.
PenaltyEmbedding embed_pctar(opt::OptModel& model, const nn::ReluNetwork& net, const Penalty& alpha,
                             double lb, double ub, const NetBinding& at);

/// Grid over (u = x / xt, xt) for the lambda-method piecewise-linear surrogate.
struct PwlSpec {
  int pieces = 4;
  double ratio_margin = 0.01;
  double xt_min = 0.0;
  double xt_max = 10.0;
  /// Cost at vertex (a, b), index a * (pieces + 1) + b, a along u, b along xt.
  std::vector<double> values;

  std::size_t axis() const { return static_cast<std::size_t>(pieces) + 1; }
  double u_at(std::size_t a) const;
  double xt_at(std::size_t b) const;
  /// Fill `values` from f(x, xt) evaluated at every vertex.
  void tabulate(const std::function<double(double x, double xt)>& f);
  void validate() const;
};

EmbeddingStats build_pwl(opt::OptModel& model, const PwlSpec& spec, opt::VarId x, opt::VarId xt,
                         opt::VarId cost, const std::string& prefix);

}  // namespace reluopt::embed
