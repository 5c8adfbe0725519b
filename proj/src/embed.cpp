#include "reluopt/embed.hpp"

#include <algorithm>
#include <cmath>

#include "reluopt/errors.hpp"

namespace reluopt::embed {

namespace {

using opt::RowSense;
using opt::Term;
using opt::VarId;

struct Affine {
  std::vector<Term> terms;
  double constant = 0.0;
};

Affine pre_activation(const nn::Dense& layer, const std::vector<NetInput>& prev, std::size_t j) {
  Affine a;
  a.constant = layer.bias[j];
  for (std::size_t i = 0; i < layer.inputs; ++i) {
    const double w = layer.w(i, j);
    if (w == 0.0) continue;
    if (prev[i].var) {
      a.terms.push_back({*prev[i].var, w});
    } else {
      a.constant += w * prev[i].value;
    }
  }
  return a;
}

// out - sum(terms) (sense) constant, optionally with `scale` on the terms.
std::vector<Term> lhs_with(VarId lead, const std::vector<Term>& terms, double scale) {
  std::vector<Term> out{{lead, 1.0}};
  for (const Term& t : terms) out.push_back({t.var, -scale * t.coef});
  return out;
}

std::string name(const std::string& prefix, const char* what, std::size_t l, std::size_t j) {
  return prefix + what + std::to_string(l) + "_" + std::to_string(j);
}

struct Plan {
  std::size_t exact_layers = 0;  // layers 1..exact_layers use Big-M
  const std::vector<std::vector<nn::Range>>* bounds = nullptr;
  const TriangleCap* cap = nullptr;
  const Penalty* alpha = nullptr;
};

void check_binding(const nn::ReluNetwork& net, const NetBinding& at) {
  if (at.inputs.size() != net.input_size()) {
    throw ShapeError("network expects " + std::to_string(net.input_size()) + " inputs, binding has " +
                     std::to_string(at.inputs.size()));
  }
  for (const NetInput& in : at.inputs) {
    if (!in.var && !std::isfinite(in.value)) throw ValidationError("non-finite constant network input");
  }
}

PenaltyEmbedding build(opt::OptModel& model, const nn::ReluNetwork& folded, const NetBinding& at, const Plan& plan) {
  PenaltyEmbedding out;
  EmbeddingStats& s = out.stats;
  std::vector<NetInput> prev = at.inputs;
  const std::size_t hidden = folded.hidden_layers();
  for (std::size_t l = 1; l <= hidden; ++l) {
    const nn::Dense& layer = folded.layer(l);
    std::vector<NetInput> cur(layer.outputs);
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      const Affine pre = pre_activation(layer, prev, j);
      if (l <= plan.exact_layers) {
        const nn::Range r = (*plan.bounds)[l - 1][j];
        if (r.max <= 0.0) {
          cur[j] = NetInput::constant(0.0);
          continue;
        }
        const double pad = 1e-9 * (1.0 + std::abs(r.max));
        const double hi = r.max + pad;
        const VarId h = model.add_variable(name(at.prefix, "h", l, j), 0.0, hi);
        ++s.variables;
        ++s.bounds;
        if (r.min >= 0.0) {
          model.add_constraint(name(at.prefix, "act", l, j), lhs_with(h, pre.terms, 1.0), RowSense::Equal,
                               pre.constant);
          ++s.rows;
        } else {
          const double lo = r.min - 1e-9 * (1.0 + std::abs(r.min));
          const VarId d = model.add_variable(name(at.prefix, "d", l, j), 0.0, 1.0, opt::VarKind::Binary);
          ++s.variables;
          ++s.binaries;
          model.add_constraint(name(at.prefix, "relu", l, j), lhs_with(h, pre.terms, 1.0), RowSense::GreaterEqual,
                               pre.constant);
          std::vector<Term> upper = lhs_with(h, pre.terms, 1.0);
          upper.push_back({d, -lo});
          model.add_constraint(name(at.prefix, "bigm_lo", l, j), upper, RowSense::LessEqual, pre.constant - lo);
          model.add_constraint(name(at.prefix, "bigm_hi", l, j), {{h, 1.0}, {d, -hi}}, RowSense::LessEqual, 0.0);
          s.rows += 3;
        }
        cur[j] = NetInput::variable(h);
        continue;
      }
      const VarId h = model.add_variable(name(at.prefix, "h", l, j), 0.0, opt::kInf);
      ++s.variables;
      ++s.bounds;
      model.add_constraint(name(at.prefix, "relu", l, j), lhs_with(h, pre.terms, 1.0), RowSense::GreaterEqual,
                           pre.constant);
      ++s.rows;
      if (plan.cap) {
        model.add_constraint(name(at.prefix, "cap", l, j), lhs_with(h, pre.terms, plan.cap->k1), RowSense::LessEqual,
                             plan.cap->k1 * pre.constant + plan.cap->k2);
        ++s.rows;
      }
      if (plan.alpha) {
        const double a = (*plan.alpha)[l - 1][j];
        if (a != 0.0) out.penalty.push_back({h, a});
      }
      cur[j] = NetInput::variable(h);
    }
    prev = std::move(cur);
  }
  const Affine o = pre_activation(folded.layer(hidden + 1), prev, 0);
  model.add_constraint(at.prefix + "out", lhs_with(at.output, o.terms, 1.0),
                       at.output_at_least ? RowSense::GreaterEqual : RowSense::Equal, o.constant);
  ++s.rows;
  return out;
}

Box effective_box(const nn::ReluNetwork& net, const Box& box, const NetBinding& at) {
  if (box.size() != net.input_size()) throw ShapeError("input box size does not match the network input");
  Box out = box;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!at.inputs[i].var) {
      out[i] = nn::Range{at.inputs[i].value, at.inputs[i].value};
    } else if (!std::isfinite(out[i].min) || !std::isfinite(out[i].max) || out[i].min > out[i].max) {
      throw ValidationError("input box must be finite and ordered for input " + std::to_string(i));
    }
  }
  return out;
}

void check_penalty(const nn::ReluNetwork& net, const Penalty& alpha) {
  if (alpha.size() != net.hidden_layers()) throw ShapeError("penalty needs one vector per hidden layer");
  for (std::size_t l = 0; l < alpha.size(); ++l) {
    if (alpha[l].size() != net.layer(l + 1).outputs) {
      throw ShapeError("penalty vector " + std::to_string(l + 1) + " has the wrong length");
    }
    for (double a : alpha[l]) {
      if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("penalty coefficients must be finite and >= 0");
    }
  }
}

}  // namespace

Penalty layer_penalty(const nn::ReluNetwork& net, const std::vector<double>& per_layer) {
  if (per_layer.size() != net.hidden_layers()) throw ShapeError("one penalty per hidden layer expected");
  Penalty p;
  for (std::size_t l = 1; l <= net.hidden_layers(); ++l) p.emplace_back(net.layer(l).outputs, per_layer[l - 1]);
  return p;
}

Penalty uniform_penalty(const nn::ReluNetwork& net, double alpha) {
  return layer_penalty(net, std::vector<double>(net.hidden_layers(), alpha));
}

TriangleCap triangle_cap(double lb, double ub) {
  if (!(lb < 0.0) || !(ub > 0.0)) throw ValidationError("triangle bounds need LB < 0 < UB");
  return TriangleCap{ub / (ub - lb), -ub * lb / (ub - lb)};
}

std::vector<std::vector<nn::Range>> propagate_bounds(const nn::ReluNetwork& net, const Box& box) {
  if (box.size() != net.input_size()) throw ShapeError("input box size does not match the network input");
  std::vector<std::vector<nn::Range>> out;
  std::vector<nn::Range> h = box;
  const std::size_t depth = net.hidden_layers() + 1;
  for (std::size_t l = 1; l <= depth; ++l) {
    const nn::Dense& layer = net.layer(l);
    std::vector<nn::Range> pre(layer.outputs);
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      double lo = layer.bias[j], hi = layer.bias[j];
      for (std::size_t i = 0; i < layer.inputs; ++i) {
        const double w = layer.w(i, j);
        if (w >= 0.0) {
          lo += w * h[i].min;
          hi += w * h[i].max;
        } else {
          lo += w * h[i].max;
          hi += w * h[i].min;
        }
      }
      pre[j] = nn::Range{lo, hi};
    }
    h.resize(pre.size());
    for (std::size_t j = 0; j < pre.size(); ++j) h[j] = nn::Range{std::max(pre[j].min, 0.0), std::max(pre[j].max, 0.0)};
    out.push_back(std::move(pre));
  }
  return out;
}

EmbeddingStats embed_cvxd(opt::OptModel& model, const nn::ReluNetwork& net, const NetBinding& at) {
  if (!net.is_convexified() || net.boundary() != 1) {
    throw KindMismatchError("convexified LP embedding needs a Convexified(1) network, got " + nn::kind_name(net.kind()));
  }
  check_binding(net, at);
  return build(model, nn::fold_normalization(net), at, Plan{}).stats;
}

EmbeddingStats embed_hybrid(opt::OptModel& model, const nn::ReluNetwork& net, int k, const Box& box,
                            const NetBinding& at) {
  const int last = static_cast<int>(net.hidden_layers()) + 1;
  if (k < 1 || k > last) throw ValidationError("hybrid boundary k must lie in 1.." + std::to_string(last));
  if (net.boundary() > k) {
    throw KindMismatchError("hybrid(" + std::to_string(k) + ") needs non-negative weights beyond layer k, got " +
                            nn::kind_name(net.kind()));
  }
  check_binding(net, at);
  const nn::ReluNetwork folded = nn::fold_normalization(net);
  if (k == 1) return build(model, folded, at, Plan{}).stats;
  const auto bounds = propagate_bounds(folded, effective_box(net, box, at));
  Plan plan;
  plan.exact_layers = static_cast<std::size_t>(k - 1);
  plan.bounds = &bounds;
  return build(model, folded, at, plan).stats;
}

EmbeddingStats embed_bigm(opt::OptModel& model, const nn::ReluNetwork& net, const Box& box, const NetBinding& at) {
  check_binding(net, at);
  const nn::ReluNetwork folded = nn::fold_normalization(net);
  const auto bounds = propagate_bounds(folded, effective_box(net, box, at));
  Plan plan;
  plan.exact_layers = net.hidden_layers();
  plan.bounds = &bounds;
  return build(model, folded, at, plan).stats;
}

PenaltyEmbedding embed_pcar(opt::OptModel& model, const nn::ReluNetwork& net, const Penalty& alpha,
                            const NetBinding& at) {
  check_binding(net, at);
  check_penalty(net, alpha);
  Plan plan;
  plan.alpha = &alpha;
  return build(model, nn::fold_normalization(net), at, plan);
}

PenaltyEmbedding embed_pctar(opt::OptModel& model, const nn::ReluNetwork& net, const Penalty& alpha, double lb,
                             double ub, const NetBinding& at) {
  const TriangleCap cap = triangle_cap(lb, ub);
  check_binding(net, at);
  check_penalty(net, alpha);
  Plan plan;
  plan.alpha = &alpha;
  plan.cap = &cap;
  return build(model, nn::fold_normalization(net), at, plan);
}

double PwlSpec::u_at(std::size_t a) const {
  return static_cast<double>(a) * (1.0 - ratio_margin) / pieces;
}

double PwlSpec::xt_at(std::size_t b) const {
  return xt_min + static_cast<double>(b) * (xt_max - xt_min) / pieces;
}

void PwlSpec::tabulate(const std::function<double(double, double)>& f) {
  if (pieces < 1) throw ValidationError("PWL needs at least one piece per axis");
  values.assign(axis() * axis(), 0.0);
  for (std::size_t a = 0; a < axis(); ++a) {
    for (std::size_t b = 0; b < axis(); ++b) {
      const double xt = xt_at(b);
      values[a * axis() + b] = f(u_at(a) * xt, xt);
    }
  }
}

void PwlSpec::validate() const {
  if (pieces < 1) throw ValidationError("PWL needs at least one piece per axis");
  if (!(ratio_margin > 0.0 && ratio_margin < 1.0)) throw ValidationError("PWL ratio margin must lie in (0, 1)");
  if (!(xt_max > xt_min) || !std::isfinite(xt_min) || !std::isfinite(xt_max)) {
    throw ValidationError("PWL grid is degenerate: xt_max must exceed xt_min");
  }
  if (values.size() != axis() * axis()) throw ShapeError("PWL table has the wrong number of vertex values");
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("PWL table contains a non-finite value");
  }
}

EmbeddingStats build_pwl(opt::OptModel& model, const PwlSpec& spec, opt::VarId x, opt::VarId xt, opt::VarId cost,
                         const std::string& prefix) {
  spec.validate();
  EmbeddingStats s;
  const std::size_t n = spec.axis();
  const auto np = static_cast<std::size_t>(spec.pieces);
  std::vector<VarId> w(n * n), z(np * np);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      w[a * n + b] = model.add_variable(prefix + "w" + std::to_string(a) + "_" + std::to_string(b), 0.0, 1.0);
    }
  }
  for (std::size_t a = 0; a < np; ++a) {
    for (std::size_t b = 0; b < np; ++b) {
      z[a * np + b] = model.add_variable(prefix + "z" + std::to_string(a) + "_" + std::to_string(b), 0.0, 1.0,
                                         opt::VarKind::Binary);
    }
  }
  s.variables = w.size() + z.size();
  s.binaries = z.size();
  s.bounds = w.size();

  std::vector<Term> sum_w, sum_z, xs{{x, 1.0}}, xts{{xt, 1.0}}, cs{{cost, 1.0}};
  for (VarId v : w) sum_w.push_back({v, 1.0});
  for (VarId v : z) sum_z.push_back({v, 1.0});
  model.add_constraint(prefix + "wsum", sum_w, RowSense::Equal, 1.0);
  model.add_constraint(prefix + "zsum", sum_z, RowSense::Equal, 1.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const VarId v = w[a * n + b];
      std::vector<Term> link{{v, 1.0}};
      for (std::size_t ca = (a > 0 ? a - 1 : 0); ca <= std::min(a, np - 1); ++ca) {
        for (std::size_t cb = (b > 0 ? b - 1 : 0); cb <= std::min(b, np - 1); ++cb) link.push_back({z[ca * np + cb], -1.0});
      }
      model.add_constraint(prefix + "link" + std::to_string(a) + "_" + std::to_string(b), link, RowSense::LessEqual,
                           0.0);
      const double xv = spec.xt_at(b);
      xs.push_back({v, -spec.u_at(a) * xv});
      xts.push_back({v, -xv});
      cs.push_back({v, -spec.values[a * n + b]});
    }
  }
  model.add_constraint(prefix + "x", xs, RowSense::Equal, 0.0);
  model.add_constraint(prefix + "xt", xts, RowSense::Equal, 0.0);
  model.add_constraint(prefix + "cost", cs, RowSense::Equal, 0.0);
  s.rows = 5 + n * n;
  return s;
}

}  // namespace reluopt::embed
