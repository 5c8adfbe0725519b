#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reluopt::opt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct VarId {
  std::uint32_t index = 0;
  friend bool operator==(VarId, VarId) = default;
  friend auto operator<=>(VarId, VarId) = default;
};

struct RowId {
  std::uint32_t index = 0;
  friend bool operator==(RowId, RowId) = default;
};

enum class VarKind { Continuous, Binary };
enum class RowSense { LessEqual, Equal, GreaterEqual };
enum class ObjSense { Minimize, Maximize };

struct Term {
  VarId var;
  double coef = 0.0;
};

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
  VarKind kind = VarKind::Continuous;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;  // coalesced, sorted by variable index
  RowSense sense = RowSense::LessEqual;
  double rhs = 0.0;
};

struct Objective {
  ObjSense sense = ObjSense::Minimize;
  std::vector<Term> terms;  // coalesced, sorted by variable index
  double constant = 0.0;
};

/// Solver-agnostic linear / mixed-binary model.
class OptModel {
 public:
  VarId add_variable(std::string name, double lower, double upper,
                     VarKind kind = VarKind::Continuous);
  RowId add_constraint(std::string name, std::vector<Term> terms, RowSense sense, double rhs);

  void set_objective(ObjSense sense, std::vector<Term> terms, double constant = 0.0);
  /// Adds `terms` to the objective (coalescing with existing coefficients).
  void add_objective_terms(const std::vector<Term>& terms, double constant = 0.0);
  void set_objective_sense(ObjSense sense) { objective_.sense = sense; }

  /// Fix both bounds of an existing variable.
  void set_bounds(VarId v, double lower, double upper);

  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_constraints() const { return constraints_.size(); }
  std::size_t num_binaries() const;

  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const Objective& objective() const { return objective_; }
  const Variable& variable(VarId v) const { return variables_.at(v.index); }

  /// Throws std::out_of_range for an unknown name.
  VarId find(std::string_view name) const;
  bool contains(std::string_view name) const;

  /// Re-checks every invariant; throws ValidationError naming the offender.
  void validate() const;

  /// Same model with the objective negated and flipped to the other sense.
  OptModel negated_objective() const;

 private:
  std::vector<Term> coalesce(std::vector<Term> terms, std::string_view owner) const;

  std::vector<Variable> variables_;
  std::vector<Constraint> constraints_;
  Objective objective_;
  std::unordered_map<std::string, std::uint32_t> by_name_;
};

enum class SolveStatus {
  Optimal,
  Infeasible,
  Unbounded,
  TimeLimit,
  GapReached,
  IterationLimit,
  NodeLimit,
};

std::string_view to_string(SolveStatus s);

struct SolveResult {
  SolveStatus status = SolveStatus::Infeasible;
  double objective = 0.0;   // in the model's own sense
  double best_bound = 0.0;  // in the model's own sense
  double gap = 0.0;
  std::vector<double> primal;  // indexed by VarId
  long long simplex_iterations = 0;
  long long bb_nodes = 0;
  double wall_time = 0.0;
  std::string diagnostics;
  /// Unbounded ray (primal direction) or phase-1 dual multipliers for Infeasible.
  std::vector<double> certificate;

  bool has_solution() const { return !primal.empty(); }
  double value(VarId v) const { return primal.at(v.index); }
  double value(const OptModel& model, std::string_view name) const {
    return value(model.find(name));
  }
};

/// Sum of coefficient * value over `terms`.
double evaluate_terms(const std::vector<Term>& terms, const std::vector<double>& x);

/// Objective value of `x` in the model's own sense.
double objective_value(const OptModel& model, const std::vector<double>& x);

/// Largest bound or row violation of `x` (0 when feasible).
double max_violation(const OptModel& model, const std::vector<double>& x);

}  // namespace reluopt::opt
