#include "reluopt/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reluopt/errors.hpp"

namespace reluopt::lp {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kDropTol = 1e-13;
constexpr int kResidualCheckEvery = 200;
constexpr int kDualRefreshEvery = 100;

}  // namespace

void SimplexOptions::validate() const {
  if (!(feasibility_tol > 0.0) || !(optimality_tol > 0.0)) {
    throw ValidationError("simplex tolerances must be positive");
  }
  if (max_iterations <= 0) throw ValidationError("max_iterations must be positive");
}

SimplexEngine::SimplexEngine(const opt::OptModel& model) {
  model.validate();
  n_ = model.num_variables();
  m_ = model.num_constraints();
  sign_ = model.objective().sense == opt::ObjSense::Maximize ? -1.0 : 1.0;

  const auto& rows = model.constraints();
  std::vector<std::size_t> count(n_, 0);
  row_start_.assign(m_ + 1, 0);
  for (std::size_t i = 0; i < m_; ++i) {
    row_start_[i + 1] = row_start_[i] + rows[i].terms.size();
    for (const opt::Term& t : rows[i].terms) ++count[t.var.index];
  }
  row_col_.resize(row_start_[m_]);
  row_val_.resize(row_start_[m_]);
  col_start_.assign(n_ + 1, 0);
  for (std::size_t j = 0; j < n_; ++j) col_start_[j + 1] = col_start_[j] + count[j];
  col_row_.resize(col_start_[n_]);
  col_val_.resize(col_start_[n_]);
  std::vector<std::size_t> fill(col_start_.begin(), col_start_.end() - 1);
  for (std::size_t i = 0; i < m_; ++i) {
    std::size_t p = row_start_[i];
    for (const opt::Term& t : rows[i].terms) {
      row_col_[p] = t.var.index;
      row_val_[p] = t.coef;
      ++p;
      const std::size_t q = fill[t.var.index]++;
      col_row_[q] = static_cast<std::uint32_t>(i);
      col_val_[q] = t.coef;
    }
  }

  const std::size_t total = n_ + m_;
  cost_.assign(total, 0.0);
  for (const opt::Term& t : model.objective().terms) cost_[t.var.index] = sign_ * t.coef;
  lo_.resize(total);
  up_.resize(total);
  for (std::size_t j = 0; j < n_; ++j) {
    lo_[j] = model.variables()[j].lower;
    up_[j] = model.variables()[j].upper;
  }
  rhs_.resize(m_);
  for (std::size_t i = 0; i < m_; ++i) {
    rhs_[i] = rows[i].rhs;
    switch (rows[i].sense) {
      case opt::RowSense::LessEqual: lo_[n_ + i] = 0.0; up_[n_ + i] = opt::kInf; break;
      case opt::RowSense::GreaterEqual: lo_[n_ + i] = -opt::kInf; up_[n_ + i] = 0.0; break;
      case opt::RowSense::Equal: lo_[n_ + i] = 0.0; up_[n_ + i] = 0.0; break;
    }
  }

  x_.assign(total, 0.0);
  state_.assign(total, State::Free);
  position_.assign(total, -1);
  for (std::size_t j = 0; j < n_; ++j) {
    if (std::isfinite(lo_[j])) {
      state_[j] = State::AtLower;
    } else if (std::isfinite(up_[j])) {
      state_[j] = State::AtUpper;
    }
    x_[j] = nonbasic_value(j);
  }
  head_.resize(m_);
  binv_ = kernels::DenseRows(m_);
  for (std::size_t i = 0; i < m_; ++i) {
    head_[i] = n_ + i;
    state_[n_ + i] = State::Basic;
    position_[n_ + i] = static_cast<std::ptrdiff_t>(i);
    binv_.row(i)[i] = 1.0;
  }
  d_.assign(total, 0.0);
  pivot_row_.assign(total, 0.0);
  recompute_basics();
}

double SimplexEngine::nonbasic_value(std::size_t j) const {
  switch (state_[j]) {
    case State::AtLower: return lo_[j];
    case State::AtUpper: return up_[j];
    default: return 0.0;
  }
}

void SimplexEngine::set_bounds(std::size_t j, double lower, double upper) {
  if (j >= n_) throw std::out_of_range("set_bounds: structural index out of range");
  if (lower > upper) throw ValidationError("set_bounds: inverted bounds");
  lo_[j] = lower;
  up_[j] = upper;
  if (state_[j] == State::Basic) return;
  if (state_[j] == State::AtUpper && std::isfinite(upper)) {
    state_[j] = State::AtUpper;
  } else if (std::isfinite(lower)) {
    state_[j] = State::AtLower;
  } else if (std::isfinite(upper)) {
    state_[j] = State::AtUpper;
  } else {
    state_[j] = State::Free;
  }
  const double target = nonbasic_value(j);
  const double delta = target - x_[j];
  if (delta == 0.0) return;
  ftran(j);
  for (std::size_t i : alpha_support_) x_[head_[i]] -= alpha_[i] * delta;
  x_[j] = target;
}

void SimplexEngine::ftran(std::size_t j) {
  alpha_.assign(m_, 0.0);
  alpha_support_.clear();
  if (j < n_) {
    const std::size_t b = col_start_[j];
    const std::size_t e = col_start_[j + 1];
    if (b == e) return;
    for (std::size_t i = 0; i < m_; ++i) {
      const double* row = binv_.row(i);
      double s = 0.0;
      for (std::size_t p = b; p < e; ++p) s += row[col_row_[p]] * col_val_[p];
      if (std::abs(s) > kDropTol) {
        alpha_[i] = s;
        alpha_support_.push_back(i);
      }
    }
  } else {
    const std::size_t k = j - n_;
    for (std::size_t i = 0; i < m_; ++i) {
      const double s = binv_.row(i)[k];
      if (std::abs(s) > kDropTol) {
        alpha_[i] = s;
        alpha_support_.push_back(i);
      }
    }
  }
}

void SimplexEngine::recompute_basics() {
  std::vector<double> r = rhs_;
  for (std::size_t j = 0; j < n_; ++j) {
    if (state_[j] == State::Basic || x_[j] == 0.0) continue;
    for (std::size_t p = col_start_[j]; p < col_start_[j + 1]; ++p) r[col_row_[p]] -= col_val_[p] * x_[j];
  }
  for (std::size_t i = 0; i < m_; ++i) {
    if (state_[n_ + i] != State::Basic) r[i] -= x_[n_ + i];
  }
  for (std::size_t p = 0; p < m_; ++p) {
    const double* row = binv_.row(p);
    double s = 0.0;
    for (std::size_t k = 0; k < m_; ++k) s += row[k] * r[k];
    x_[head_[p]] = s;
  }
}

double SimplexEngine::residual() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < m_; ++i) {
    double a = x_[n_ + i];
    for (std::size_t p = row_start_[i]; p < row_start_[i + 1]; ++p) a += row_val_[p] * x_[row_col_[p]];
    worst = std::max(worst, std::abs(a - rhs_[i]) / (1.0 + std::abs(rhs_[i])));
  }
  return worst;
}

bool SimplexEngine::refactor() {
  ++refactors_;
  // Basic slacks cover their own rows; the remaining rows and basic
  // structurals form a square block M whose inverse yields the rest.
  std::vector<std::ptrdiff_t> kindex(n_, -1);
  std::vector<std::size_t> structural;  // head positions holding structurals
  std::vector<char> covered(m_, 0);
  for (std::size_t p = 0; p < m_; ++p) {
    const std::size_t v = head_[p];
    if (v >= n_) {
      covered[v - n_] = 1;
    } else {
      kindex[v] = static_cast<std::ptrdiff_t>(structural.size());
      structural.push_back(p);
    }
  }
  std::vector<std::size_t> free_rows;
  std::vector<std::ptrdiff_t> rindex(m_, -1);
  for (std::size_t i = 0; i < m_; ++i) {
    if (!covered[i]) {
      rindex[i] = static_cast<std::ptrdiff_t>(free_rows.size());
      free_rows.push_back(i);
    }
  }
  const std::size_t k = structural.size();
  if (free_rows.size() != k) return false;

  // Augmented [M | I] Gauss-Jordan with partial pivoting.
  std::vector<double> a(k * 2 * k, 0.0);
  const std::size_t w = 2 * k;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t v = head_[structural[c]];
    for (std::size_t p = col_start_[v]; p < col_start_[v + 1]; ++p) {
      const std::ptrdiff_t r = rindex[col_row_[p]];
      if (r >= 0) a[static_cast<std::size_t>(r) * w + c] = col_val_[p];
    }
  }
  for (std::size_t r = 0; r < k; ++r) a[r * w + k + r] = 1.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best = c;
    for (std::size_t r = c + 1; r < k; ++r) {
      if (std::abs(a[r * w + c]) > std::abs(a[best * w + c])) best = r;
    }
    if (std::abs(a[best * w + c]) < 1e-12) return false;
    if (best != c) {
      for (std::size_t t = 0; t < w; ++t) std::swap(a[best * w + t], a[c * w + t]);
    }
    const double inv = 1.0 / a[c * w + c];
    for (std::size_t t = 0; t < w; ++t) a[c * w + t] *= inv;
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const double f = a[r * w + c];
      if (f == 0.0) continue;
      for (std::size_t t = c; t < w; ++t) a[r * w + t] -= f * a[c * w + t];
    }
  }
  // Row c of the right block is row c of M^{-1}: maps free-row values to the
  // structural basic in column c.
  std::fill(binv_.data.begin(), binv_.data.end(), 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double* out = binv_.row(structural[c]);
    const double* inv_row = &a[c * w + k];
    for (std::size_t r = 0; r < k; ++r) out[free_rows[r]] = inv_row[r];
  }
  for (std::size_t p = 0; p < m_; ++p) {
    const std::size_t v = head_[p];
    if (v < n_) continue;
    const std::size_t i = v - n_;
    double* out = binv_.row(p);
    out[i] = 1.0;
    for (std::size_t q = row_start_[i]; q < row_start_[i + 1]; ++q) {
      const std::ptrdiff_t c = kindex[row_col_[q]];
      if (c < 0) continue;
      const double coef = row_val_[q];
      const double* inv_row = &a[static_cast<std::size_t>(c) * w + k];
      for (std::size_t r = 0; r < k; ++r) out[free_rows[r]] -= coef * inv_row[r];
    }
  }
  return true;
}

bool SimplexEngine::basics_feasible(double tol) const {
  for (std::size_t p = 0; p < m_; ++p) {
    const std::size_t v = head_[p];
    if (x_[v] < lo_[v] - tol || x_[v] > up_[v] + tol) return false;
  }
  return true;
}

void SimplexEngine::compute_phase1_duals() {
  y_.assign(m_, 0.0);
  const double tol = feas_tol_;
  for (std::size_t p = 0; p < m_; ++p) {
    const std::size_t v = head_[p];
    double c = 0.0;
    if (x_[v] < lo_[v] - tol) {
      c = -1.0;
    } else if (x_[v] > up_[v] + tol) {
      c = 1.0;
    }
    if (c == 0.0) continue;
    const double* row = binv_.row(p);
    for (std::size_t k = 0; k < m_; ++k) y_[k] += c * row[k];
  }
  for (std::size_t j = 0; j < n_; ++j) {
    if (state_[j] == State::Basic) {
      d_[j] = 0.0;
      continue;
    }
    double s = 0.0;
    for (std::size_t p = col_start_[j]; p < col_start_[j + 1]; ++p) s += y_[col_row_[p]] * col_val_[p];
    d_[j] = -s;
  }
  for (std::size_t i = 0; i < m_; ++i) d_[n_ + i] = state_[n_ + i] == State::Basic ? 0.0 : -y_[i];
}

void SimplexEngine::compute_phase2_duals() {
  y_.assign(m_, 0.0);
  for (std::size_t p = 0; p < m_; ++p) {
    const double c = cost_[head_[p]];
    if (c == 0.0) continue;
    const double* row = binv_.row(p);
    for (std::size_t k = 0; k < m_; ++k) y_[k] += c * row[k];
  }
  for (std::size_t j = 0; j < n_; ++j) {
    if (state_[j] == State::Basic) {
      d_[j] = 0.0;
      continue;
    }
    double s = 0.0;
    for (std::size_t p = col_start_[j]; p < col_start_[j + 1]; ++p) s += y_[col_row_[p]] * col_val_[p];
    d_[j] = cost_[j] - s;
  }
  for (std::size_t i = 0; i < m_; ++i) d_[n_ + i] = state_[n_ + i] == State::Basic ? 0.0 : -y_[i];
}

void SimplexEngine::update_phase2_duals(std::size_t entering, std::size_t row, std::size_t leaving) {
  // Pivot row of B^{-1}A from the (not yet updated) row `row` of B^{-1}.
  const double* rho = binv_.row(row);
  std::vector<std::size_t> touched;
  touched.reserve(rho_support_.size() * 4);
  std::vector<char>& mark = mark_;
  for (std::size_t k : rho_support_) {
    const double r = rho[k];
    const std::size_t s = n_ + k;
    if (!mark[s]) {
      mark[s] = 1;
      touched.push_back(s);
    }
    pivot_row_[s] += r;
    for (std::size_t p = row_start_[k]; p < row_start_[k + 1]; ++p) {
      const std::size_t j = row_col_[p];
      if (!mark[j]) {
        mark[j] = 1;
        touched.push_back(j);
      }
      pivot_row_[j] += r * row_val_[p];
    }
  }
  const double ratio = d_[entering] / alpha_[row];
  for (std::size_t j : touched) {
    if (state_[j] != State::Basic) d_[j] -= ratio * pivot_row_[j];
    pivot_row_[j] = 0.0;
    mark[j] = 0;
  }
  d_[leaving] = -ratio;
  d_[entering] = 0.0;
}

void SimplexEngine::pivot(std::size_t row, std::size_t entering) {
  if (parallel_) {
    kernels::eliminate_omp(binv_, row, alpha_, alpha_support_, rho_support_);
  } else {
    kernels::eliminate_serial(binv_, row, alpha_, alpha_support_, rho_support_);
  }
  const std::size_t leaving = head_[row];
  position_[leaving] = -1;
  head_[row] = entering;
  position_[entering] = static_cast<std::ptrdiff_t>(row);
  state_[entering] = State::Basic;
}

LpStatus SimplexEngine::solve(const SimplexOptions& opts, Clock::time_point deadline) {
  opts.validate();
  parallel_ = opts.parallel_kernels;
  const double tol = opts.feasibility_tol;
  feas_tol_ = tol;
  const double dtol = opts.optimality_tol;
  certificate_.clear();
  mark_.assign(total(), 0);
  const auto start = Clock::now();
  if (opts.time_limit < 1e299) {
    deadline = std::min(deadline, start + std::chrono::duration_cast<Clock::duration>(
                                              std::chrono::duration<double>(opts.time_limit)));
  }
  const long long first_iteration = iterations_;
  const std::size_t N = total();

  int degenerate = 0;
  bool bland = false;
  bool duals_fresh = false;
  int since_refresh = 0;
  bool verified = false;
  int trouble = 0;
  long long loop = 0;

  recompute_basics();
  while (true) {
    if (iterations_ - first_iteration >= opts.max_iterations) return LpStatus::IterationLimit;
    if ((loop++ & 31) == 0 && Clock::now() > deadline) return LpStatus::TimeLimit;

    const bool feasible = basics_feasible(tol);
    if (!feasible) {
      compute_phase1_duals();
      duals_fresh = false;
    } else if (!duals_fresh || since_refresh >= kDualRefreshEvery) {
      compute_phase2_duals();
      duals_fresh = true;
      since_refresh = 0;
    }

    std::size_t q = N;
    double best = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      const State st = state_[j];
      if (st == State::Basic || lo_[j] == up_[j]) continue;
      const double dj = d_[j];
      const bool eligible = (st == State::AtLower && dj < -dtol) || (st == State::AtUpper && dj > dtol) ||
                            (st == State::Free && std::abs(dj) > dtol);
      if (!eligible) continue;
      if (bland) {
        q = j;
        break;
      }
      if (std::abs(dj) > best) {
        best = std::abs(dj);
        q = j;
      }
    }

    if (q == N) {
      if (!verified) {
        verified = true;
        if (residual() > 1e-9) refactor();
        recompute_basics();
        duals_fresh = false;
        continue;
      }
      if (!feasible) {
        certificate_ = y_;
        return LpStatus::Infeasible;
      }
      return LpStatus::Optimal;
    }

    const double dir = d_[q] < 0.0 ? 1.0 : -1.0;
    ftran(q);

    // Ratio test: Harris two-pass outside Bland mode, textbook inside it.
    const double range = up_[q] - lo_[q];
    double theta_max = opt::kInf;
    for (std::size_t i : alpha_support_) {
      const double a = alpha_[i];
      if (std::abs(a) < kPivotTol) continue;
      const double rate = -dir * a;
      const std::size_t v = head_[i];
      const double xv = x_[v];
      double lim = opt::kInf;
      if (rate > 0.0) {
        if (xv < lo_[v] - tol) {
          lim = (lo_[v] - xv + tol) / rate;
        } else if (xv <= up_[v] + tol && std::isfinite(up_[v])) {
          lim = (up_[v] - xv + tol) / rate;
        }
      } else {
        if (xv > up_[v] + tol) {
          lim = (up_[v] - xv - tol) / rate;
        } else if (xv >= lo_[v] - tol && std::isfinite(lo_[v])) {
          lim = (lo_[v] - xv - tol) / rate;
        }
      }
      theta_max = std::min(theta_max, lim);
    }

    std::ptrdiff_t leave = -1;
    bool leave_upper = false;
    double step = 0.0;
    bool flip = false;
    if (std::isfinite(range) && range <= theta_max) {
      flip = true;
      step = range;
    } else if (std::isfinite(theta_max)) {
      double best_pivot = 0.0;
      double best_ratio = opt::kInf;
      for (std::size_t i : alpha_support_) {
        const double a = alpha_[i];
        if (std::abs(a) < kPivotTol) continue;
        const double rate = -dir * a;
        const std::size_t v = head_[i];
        const double xv = x_[v];
        double target = 0.0;
        bool upper = false;
        if (rate > 0.0) {
          if (xv < lo_[v] - tol) {
            target = lo_[v];
          } else if (xv <= up_[v] + tol && std::isfinite(up_[v])) {
            target = up_[v];
            upper = true;
          } else {
            continue;
          }
        } else {
          if (xv > up_[v] + tol) {
            target = up_[v];
            upper = true;
          } else if (xv >= lo_[v] - tol && std::isfinite(lo_[v])) {
            target = lo_[v];
          } else {
            continue;
          }
        }
        const double ratio = (target - xv) / rate;
        if (bland) {
          if (ratio < best_ratio - 1e-12 ||
              (ratio <= best_ratio + 1e-12 && leave >= 0 && v < head_[static_cast<std::size_t>(leave)])) {
            best_ratio = ratio;
            leave = static_cast<std::ptrdiff_t>(i);
            leave_upper = upper;
          }
        } else if (ratio <= theta_max && std::abs(a) > best_pivot) {
          best_pivot = std::abs(a);
          best_ratio = ratio;
          leave = static_cast<std::ptrdiff_t>(i);
          leave_upper = upper;
        }
      }
      if (leave >= 0) {
        step = std::max(best_ratio, 0.0);
        if (bland && std::isfinite(range) && range <= step) {
          flip = true;
          step = range;
          leave = -1;
        }
      }
    }

    if (!flip && leave < 0) {
      if (!feasible || !std::isfinite(theta_max)) {
        if (feasible) {
          certificate_.assign(n_, 0.0);
          if (q < n_) certificate_[q] = dir;
          for (std::size_t i : alpha_support_) {
            if (head_[i] < n_) certificate_[head_[i]] = -dir * alpha_[i];
          }
          return LpStatus::Unbounded;
        }
      }
      // Only reachable through numerical trouble: rebuild and retry.
      if (++trouble > 5) {
        certificate_ = y_;
        return LpStatus::Infeasible;
      }
      refactor();
      recompute_basics();
      duals_fresh = false;
      continue;
    }

    if (step > 0.0) {
      x_[q] += dir * step;
      for (std::size_t i : alpha_support_) x_[head_[i]] -= dir * step * alpha_[i];
    }
    if (flip) {
      state_[q] = dir > 0.0 ? State::AtUpper : State::AtLower;
      x_[q] = nonbasic_value(q);
    } else {
      const auto r = static_cast<std::size_t>(leave);
      const std::size_t leaving = head_[r];
      rho_support_.clear();
      const double* rho = binv_.row(r);
      for (std::size_t k = 0; k < m_; ++k) {
        if (rho[k] != 0.0) rho_support_.push_back(k);
      }
      if (feasible && duals_fresh) update_phase2_duals(q, r, leaving);
      pivot(r, q);
      state_[leaving] = leave_upper ? State::AtUpper : State::AtLower;
      x_[leaving] = leave_upper ? up_[leaving] : lo_[leaving];
    }

    ++iterations_;
    ++since_refresh;
    verified = false;
    if (step * std::abs(d_[q]) <= 1e-12 && !flip) {
      if (++degenerate > opts.bland_after) bland = true;
    } else {
      degenerate = 0;
      bland = false;
    }
    if ((iterations_ - first_iteration) % kResidualCheckEvery == 0) {
      if (residual() > 1e-9) {
        refactor();
        recompute_basics();
        duals_fresh = false;
      }
    }
  }
}

std::vector<double> SimplexEngine::primal() const {
  return std::vector<double>(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_));
}

double SimplexEngine::objective() const {
  double s = 0.0;
  for (std::size_t j = 0; j < n_; ++j) s += cost_[j] * x_[j];
  return s;
}

opt::SolveResult solve_lp(const opt::OptModel& model, const SimplexOptions& opts) {
  if (model.num_binaries() > 0) {
    throw ValidationError("solve_lp: model has binary variables; use branch and bound");
  }
  const auto start = Clock::now();
  SimplexEngine engine(model);
  const LpStatus status = engine.solve(opts);
  opt::SolveResult result;
  result.simplex_iterations = engine.iterations();
  result.certificate = engine.certificate();
  switch (status) {
    case LpStatus::Optimal: {
      result.status = opt::SolveStatus::Optimal;
      result.primal = engine.primal();
      result.objective = opt::objective_value(model, result.primal);
      result.best_bound = result.objective;
      result.gap = 0.0;
      break;
    }
    case LpStatus::Infeasible:
      result.status = opt::SolveStatus::Infeasible;
      result.diagnostics = "phase 1 ended with positive infeasibility; certificate holds the phase-1 row multipliers";
      break;
    case LpStatus::Unbounded:
      result.status = opt::SolveStatus::Unbounded;
      result.diagnostics = "improving ray found; certificate holds its structural direction";
      result.primal = engine.primal();
      break;
    case LpStatus::IterationLimit:
      result.status = opt::SolveStatus::IterationLimit;
      result.diagnostics = "simplex iteration limit exceeded";
      break;
    case LpStatus::TimeLimit:
      result.status = opt::SolveStatus::TimeLimit;
      result.diagnostics = "simplex time limit exceeded";
      break;
  }
  if (status != LpStatus::Optimal) {
    const double inf = model.objective().sense == opt::ObjSense::Minimize ? opt::kInf : -opt::kInf;
    result.objective = status == LpStatus::Unbounded ? -inf : inf;
    result.best_bound = status == LpStatus::Unbounded ? -inf : result.objective;
    result.gap = opt::kInf;
  }
  result.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

}  // namespace reluopt::lp
