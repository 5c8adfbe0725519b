#pragma once

#include <chrono>
#include <cstdint>
#include <vector>

#include "reluopt/kernels.hpp"
#include "reluopt/model.hpp"

namespace reluopt::lp {

struct SimplexOptions {
  double feasibility_tol = 1e-7;
  double optimality_tol = 1e-7;
  long long max_iterations = 1'000'000;
  /// Consecutive degenerate pivots before switching to Bland's rule.
  int bland_after = 1000;
  double time_limit = 1e300;  // seconds
  bool parallel_kernels = true;

  void validate() const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit, TimeLimit };

using Clock = std::chrono::steady_clock;

/// Bounded-variable primal simplex over an explicit dense basis inverse.
///
/// Every row gets a slack column (row activity + slack = rhs), so the slack
/// basis is always a valid start. Variable bounds never become rows. Phase 1
/// minimises the sum of bound infeasibilities of the basic variables, which
/// lets the engine restart from whatever basis it currently holds after a
/// bound change; branch-and-bound relies on that for warm starts.
///
/// Binary variables are treated as continuous within their bounds.
class SimplexEngine {
 public:
  explicit SimplexEngine(const opt::OptModel& model);

  std::size_t num_structural() const { return n_; }
  std::size_t num_rows() const { return m_; }

  /// Change the bounds of structural variable j. Keeps the current basis.
  void set_bounds(std::size_t j, double lower, double upper);
  double lower(std::size_t j) const { return lo_[j]; }
  double upper(std::size_t j) const { return up_[j]; }

  LpStatus solve(const SimplexOptions& opts, Clock::time_point deadline = Clock::time_point::max());

  /// Structural values of the current basic solution.
  std::vector<double> primal() const;
  /// Objective in the engine's minimisation sense, without the model constant.
  double objective() const;
  long long iterations() const { return iterations_; }
  int refactorizations() const { return refactors_; }
  /// Unbounded ray over structurals, or phase-1 row multipliers when infeasible.
  const std::vector<double>& certificate() const { return certificate_; }
  double sense_sign() const { return sign_; }

 private:
  enum class State : std::uint8_t { Basic, AtLower, AtUpper, Free };

  std::size_t total() const { return n_ + m_; }
  void ftran(std::size_t j);
  void recompute_basics();
  double residual() const;
  bool refactor();
  void compute_phase1_duals();
  void compute_phase2_duals();
  void update_phase2_duals(std::size_t entering, std::size_t row, std::size_t leaving);
  bool basics_feasible(double tol) const;
  double nonbasic_value(std::size_t j) const;
  void pivot(std::size_t row, std::size_t entering);

  std::size_t n_ = 0;
  std::size_t m_ = 0;
  double sign_ = 1.0;

  std::vector<std::size_t> col_start_;
  std::vector<std::uint32_t> col_row_;
  std::vector<double> col_val_;
  std::vector<std::size_t> row_start_;
  std::vector<std::uint32_t> row_col_;
  std::vector<double> row_val_;

  std::vector<double> cost_;
  std::vector<double> lo_;
  std::vector<double> up_;
  std::vector<double> rhs_;

  std::vector<double> x_;
  std::vector<State> state_;
  std::vector<std::size_t> head_;
  std::vector<std::ptrdiff_t> position_;
  kernels::DenseRows binv_;
  std::vector<double> d_;

  std::vector<double> alpha_;
  std::vector<std::size_t> alpha_support_;
  std::vector<std::size_t> rho_support_;
  std::vector<double> pivot_row_;
  std::vector<double> y_;
  std::vector<char> mark_;

  bool parallel_ = true;
  double feas_tol_ = 1e-7;
  long long iterations_ = 0;
  int refactors_ = 0;
  std::vector<double> certificate_;
};

/// Solve a purely continuous model. Throws ValidationError if it has binaries.
opt::SolveResult solve_lp(const opt::OptModel& model, const SimplexOptions& opts = {});

}  // namespace reluopt::lp
