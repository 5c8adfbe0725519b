#pragma once

// Independent reference solvers shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "reluopt/model.hpp"
#include "reluopt/nn.hpp"

namespace oracle {

using namespace reluopt::opt;

struct DenseLp {
  std::size_t n = 0;
  std::vector<double> c;
  std::vector<std::vector<double>> a;  // rows as a.x <= b
  std::vector<double> b;
  std::vector<double> lo, hi;
};

// Solve the square system by Gaussian elimination; nullopt when singular.
inline std::optional<std::vector<double>> solve_square(std::vector<std::vector<double>> m, std::vector<double> r) {
  const std::size_t n = r.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t i = c + 1; i < n; ++i) {
      if (std::abs(m[i][c]) > std::abs(m[p][c])) p = i;
    }
    if (std::abs(m[p][c]) < 1e-10) return std::nullopt;
    std::swap(m[p], m[c]);
    std::swap(r[p], r[c]);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == c) continue;
      const double f = m[i][c] / m[c][c];
      for (std::size_t k = c; k < n; ++k) m[i][k] -= f * m[c][k];
      r[i] -= f * r[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = r[i] / m[i][i];
  return x;
}

// Minimum over every basic feasible point obtained by making n of the
// inequalities (rows and box sides) tight.
inline std::optional<double> vertex_oracle(const DenseLp& lp) {
  std::vector<std::vector<double>> rows = lp.a;
  std::vector<double> rhs = lp.b;
  for (std::size_t j = 0; j < lp.n; ++j) {
    std::vector<double> e(lp.n, 0.0);
    e[j] = 1.0;
    rows.push_back(e);
    rhs.push_back(lp.hi[j]);
    e[j] = -1.0;
    rows.push_back(e);
    rhs.push_back(-lp.lo[j]);
  }
  const std::size_t total = rows.size();
  std::optional<double> best;
  std::vector<std::size_t> pick(lp.n);
  for (std::size_t i = 0; i < lp.n; ++i) pick[i] = i;
  while (true) {
    std::vector<std::vector<double>> m;
    std::vector<double> r;
    for (std::size_t i : pick) {
      m.push_back(rows[i]);
      r.push_back(rhs[i]);
    }
    if (auto x = solve_square(m, r)) {
      bool ok = true;
      for (std::size_t i = 0; i < total && ok; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < lp.n; ++j) s += rows[i][j] * (*x)[j];
        ok = s <= rhs[i] + 1e-9 * (1.0 + std::abs(rhs[i]));
      }
      if (ok) {
        double v = 0.0;
        for (std::size_t j = 0; j < lp.n; ++j) v += lp.c[j] * (*x)[j];
        if (!best || v < *best) best = v;
      }
    }
    std::ptrdiff_t k = static_cast<std::ptrdiff_t>(lp.n) - 1;
    while (k >= 0 && pick[static_cast<std::size_t>(k)] == total - lp.n + static_cast<std::size_t>(k)) --k;
    if (k < 0) break;
    ++pick[static_cast<std::size_t>(k)];
    for (std::size_t i = static_cast<std::size_t>(k) + 1; i < lp.n; ++i) pick[i] = pick[i - 1] + 1;
  }
  return best;
}

inline DenseLp random_lp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nd(1, 6), md(1, 8);
  std::uniform_real_distribution<double> coef(-5.0, 5.0), box(0.5, 6.0);
  DenseLp lp;
  lp.n = static_cast<std::size_t>(nd(rng));
  const auto m = static_cast<std::size_t>(md(rng));
  for (std::size_t j = 0; j < lp.n; ++j) {
    lp.c.push_back(std::round(coef(rng) * 4.0) / 4.0);
    const double l = -box(rng) * 0.5;
    lp.lo.push_back(l);
    lp.hi.push_back(l + box(rng));
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> row(lp.n);
    for (double& v : row) v = std::round(coef(rng) * 4.0) / 4.0;
    lp.a.push_back(row);
    lp.b.push_back(coef(rng));
  }
  return lp;
}

inline reluopt::opt::OptModel to_model(const DenseLp& lp, bool mixed_senses) {
  OptModel m;
  std::vector<VarId> v;
  for (std::size_t j = 0; j < lp.n; ++j) v.push_back(m.add_variable("x" + std::to_string(j), lp.lo[j], lp.hi[j]));
  for (std::size_t i = 0; i < lp.a.size(); ++i) {
    std::vector<Term> t;
    const bool flip = mixed_senses && i % 2 == 1;
    for (std::size_t j = 0; j < lp.n; ++j) t.push_back({v[j], flip ? -lp.a[i][j] : lp.a[i][j]});
    m.add_constraint("r" + std::to_string(i), t, flip ? RowSense::GreaterEqual : RowSense::LessEqual,
                     flip ? -lp.b[i] : lp.b[i]);
  }
  std::vector<Term> obj;
  for (std::size_t j = 0; j < lp.n; ++j) obj.push_back({v[j], lp.c[j]});
  m.set_objective(ObjSense::Minimize, obj);
  return m;
}

// Binaries d, one continuous y in [ylo, yhi]; rows a.d + g*y <= b.
struct SmallMip {
  std::size_t nb = 0;
  std::vector<double> c;
  double e = 0.0;
  double ylo = 0.0, yhi = 0.0;
  std::vector<std::vector<double>> a;
  std::vector<double> g, b;
};

// Enumerate every binary assignment; y is then a one-dimensional LP whose
// optimum sits at an end of the feasible interval.
inline std::optional<double> enumerate(const SmallMip& p) {
  std::optional<double> best;
  for (std::uint32_t mask = 0; mask < (1u << p.nb); ++mask) {
    double lo = p.ylo, hi = p.yhi, base = 0.0;
    bool ok = true;
    for (std::size_t j = 0; j < p.nb; ++j) base += (mask >> j & 1u) ? p.c[j] : 0.0;
    for (std::size_t i = 0; i < p.a.size() && ok; ++i) {
      double act = 0.0;
      for (std::size_t j = 0; j < p.nb; ++j) act += (mask >> j & 1u) ? p.a[i][j] : 0.0;
      const double slack = p.b[i] - act;
      if (p.g[i] == 0.0) {
        ok = slack >= 0.0;
      } else if (p.g[i] > 0.0) {
        hi = std::min(hi, slack / p.g[i]);
      } else {
        lo = std::max(lo, slack / p.g[i]);
      }
    }
    if (!ok || lo > hi) continue;
    const double v = base + std::min(p.e * lo, p.e * hi);
    if (!best || v < *best) best = v;
  }
  return best;
}

inline SmallMip random_mip(std::mt19937_64& rng, bool pure) {
  std::uniform_int_distribution<int> nb(1, 12), rows(1, 6), ic(-9, 9);
  SmallMip p;
  p.nb = static_cast<std::size_t>(nb(rng));
  for (std::size_t j = 0; j < p.nb; ++j) p.c.push_back(ic(rng));
  p.e = pure ? 0.0 : ic(rng) * 0.5;
  p.ylo = pure ? 0.0 : -2.0;
  p.yhi = pure ? 0.0 : 3.0;
  const int m = rows(rng);
  for (int i = 0; i < m; ++i) {
    std::vector<double> row(p.nb);
    for (double& v : row) v = ic(rng);
    p.a.push_back(row);
    p.g.push_back(pure ? 0.0 : ic(rng) * 0.5);
    p.b.push_back(ic(rng) + 4);
  }
  return p;
}

inline reluopt::opt::OptModel to_model(const SmallMip& p) {
  OptModel m;
  std::vector<VarId> d;
  for (std::size_t j = 0; j < p.nb; ++j) d.push_back(m.add_variable("d" + std::to_string(j), 0.0, 1.0, VarKind::Binary));
  const VarId y = m.add_variable("y", p.ylo, p.yhi);
  for (std::size_t i = 0; i < p.a.size(); ++i) {
    std::vector<Term> t;
    for (std::size_t j = 0; j < p.nb; ++j) t.push_back({d[j], p.a[i][j]});
    t.push_back({y, p.g[i]});
    m.add_constraint("r" + std::to_string(i), t, RowSense::LessEqual, p.b[i]);
  }
  std::vector<Term> obj;
  for (std::size_t j = 0; j < p.nb; ++j) obj.push_back({d[j], p.c[j]});
  obj.push_back({y, p.e});
  m.set_objective(ObjSense::Minimize, obj);
  return m;
}

// Forward pass in normalised units written directly from the layer equations.
inline double plain_forward(const reluopt::nn::ReluNetwork& net, const double* z) {
  std::vector<double> h(z, z + net.input_size());
  const std::size_t count = net.layers().size();
  for (std::size_t l = 1; l <= count; ++l) {
    const reluopt::nn::Dense& d = net.layer(l);
    std::vector<double> next(d.outputs);
    for (std::size_t j = 0; j < d.outputs; ++j) {
      double a = d.bias[j];
      for (std::size_t i = 0; i < d.inputs; ++i) a += d.w(i, j) * h[i];
      next[j] = l == count ? a : std::max(a, 0.0);
    }
    h = std::move(next);
  }
  return h[0];
}

inline double plain_mse(const reluopt::nn::ReluNetwork& net, const std::vector<double>& inputs,
                        const std::vector<double>& targets) {
  double s = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double e = plain_forward(net, inputs.data() + k * net.input_size()) - targets[k];
    s += e * e;
  }
  return s / static_cast<double>(targets.size());
}

struct GradientCheck {
  double worst_relative = 0.0;
  std::size_t entries = 0;
};

// Central differences of the batch MSE against `analytic` (weights then
// biases per layer). Relative error uses max(|analytic|, floor) as scale.
inline GradientCheck finite_difference_check(reluopt::nn::ReluNetwork net, const std::vector<double>& inputs,
                                             const std::vector<double>& targets,
                                             const std::vector<reluopt::nn::Dense>& analytic,
                                             double step = 1e-5, double floor = 1e-3) {
  GradientCheck out;
  auto probe = [&](double& param, double g) {
    const double keep = param;
    param = keep + step;
    const double up = plain_mse(net, inputs, targets);
    param = keep - step;
    const double down = plain_mse(net, inputs, targets);
    param = keep;
    const double fd = (up - down) / (2.0 * step);
    out.worst_relative = std::max(out.worst_relative, std::abs(fd - g) / std::max(std::abs(g), floor));
    ++out.entries;
  };
  for (std::size_t l = 1; l <= net.layers().size(); ++l) {
    reluopt::nn::Dense& d = net.layer(l);
    for (std::size_t i = 0; i < d.weights.size(); ++i) probe(d.weights[i], analytic[l - 1].weights[i]);
    for (std::size_t j = 0; j < d.bias.size(); ++j) probe(d.bias[j], analytic[l - 1].bias[j]);
  }
  return out;
}

}  // namespace oracle
