#include "reluopt/model.hpp"

#include <algorithm>
#include <cmath>

#include "reluopt/errors.hpp"

namespace reluopt::opt {

VarId OptModel::add_variable(std::string name, double lower, double upper, VarKind kind) {
  if (name.empty()) throw ValidationError("variable name must not be empty");
  if (by_name_.count(name) != 0) throw ValidationError("duplicate variable name '" + name + "'");
  if (std::isnan(lower) || std::isnan(upper)) throw ValidationError("NaN bound on '" + name + "'");
  if (lower > upper) throw ValidationError("inverted bounds on '" + name + "'");
  if (kind == VarKind::Binary && (lower < 0.0 || upper > 1.0)) {
    throw ValidationError("binary '" + name + "' must have bounds within [0, 1]");
  }
  const auto index = static_cast<std::uint32_t>(variables_.size());
  by_name_.emplace(name, index);
  variables_.push_back(Variable{std::move(name), lower, upper, kind});
  return VarId{index};
}

std::vector<Term> OptModel::coalesce(std::vector<Term> terms, std::string_view owner) const {
  for (const Term& t : terms) {
    if (t.var.index >= variables_.size()) {
      throw ValidationError(std::string(owner) + " references unknown variable index " +
                            std::to_string(t.var.index));
    }
    if (!std::isfinite(t.coef)) {
      throw ValidationError(std::string(owner) + " has a non-finite coefficient on '" +
                            variables_[t.var.index].name + "'");
    }
  }
  std::stable_sort(terms.begin(), terms.end(),
                   [](const Term& a, const Term& b) { return a.var < b.var; });
  std::vector<Term> out;
  out.reserve(terms.size());
  for (const Term& t : terms) {
    if (!out.empty() && out.back().var == t.var) {
      out.back().coef += t.coef;
    } else {
      out.push_back(t);
    }
  }
  return out;
}

RowId OptModel::add_constraint(std::string name, std::vector<Term> terms, RowSense sense, double rhs) {
  if (!std::isfinite(rhs)) throw ValidationError("constraint '" + name + "' has a non-finite rhs");
  auto merged = coalesce(std::move(terms), "constraint '" + name + "'");
  const auto index = static_cast<std::uint32_t>(constraints_.size());
  constraints_.push_back(Constraint{std::move(name), std::move(merged), sense, rhs});
  return RowId{index};
}

void OptModel::set_objective(ObjSense sense, std::vector<Term> terms, double constant) {
  if (!std::isfinite(constant)) throw ValidationError("objective constant must be finite");
  objective_ = Objective{sense, coalesce(std::move(terms), "objective"), constant};
}

void OptModel::add_objective_terms(const std::vector<Term>& terms, double constant) {
  std::vector<Term> all = objective_.terms;
  all.insert(all.end(), terms.begin(), terms.end());
  objective_.terms = coalesce(std::move(all), "objective");
  objective_.constant += constant;
}

void OptModel::set_bounds(VarId v, double lower, double upper) {
  Variable& var = variables_.at(v.index);
  if (lower > upper) throw ValidationError("inverted bounds on '" + var.name + "'");
  var.lower = lower;
  var.upper = upper;
}

std::size_t OptModel::num_binaries() const {
  return static_cast<std::size_t>(std::count_if(variables_.begin(), variables_.end(), [](const Variable& v) {
    return v.kind == VarKind::Binary;
  }));
}

VarId OptModel::find(std::string_view name) const {
  const auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) throw std::out_of_range("no variable named '" + std::string(name) + "'");
  return VarId{it->second};
}

bool OptModel::contains(std::string_view name) const {
  return by_name_.count(std::string(name)) != 0;
}

void OptModel::validate() const {
  for (const Variable& v : variables_) {
    if (std::isnan(v.lower) || std::isnan(v.upper) || v.lower > v.upper) {
      throw ValidationError("variable '" + v.name + "' has invalid bounds");
    }
    if (v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0)) {
      throw ValidationError("binary '" + v.name + "' has bounds outside [0, 1]");
    }
  }
  auto check_terms = [&](const std::vector<Term>& terms, const std::string& owner) {
    for (const Term& t : terms) {
      if (t.var.index >= variables_.size()) throw ValidationError(owner + " references an unknown variable");
      if (!std::isfinite(t.coef)) throw ValidationError(owner + " has a non-finite coefficient");
    }
  };
  for (const Constraint& c : constraints_) {
    check_terms(c.terms, "constraint '" + c.name + "'");
    if (!std::isfinite(c.rhs)) throw ValidationError("constraint '" + c.name + "' has a non-finite rhs");
  }
  check_terms(objective_.terms, "objective");
  if (!std::isfinite(objective_.constant)) throw ValidationError("objective constant is not finite");
}

OptModel OptModel::negated_objective() const {
  OptModel out = *this;
  for (Term& t : out.objective_.terms) t.coef = -t.coef;
  out.objective_.constant = -out.objective_.constant;
  out.objective_.sense =
      objective_.sense == ObjSense::Minimize ? ObjSense::Maximize : ObjSense::Minimize;
  return out;
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::TimeLimit: return "TimeLimit";
    case SolveStatus::GapReached: return "GapReached";
    case SolveStatus::IterationLimit: return "IterationLimit";
    case SolveStatus::NodeLimit: return "NodeLimit";
  }
  return "Unknown";
}

double evaluate_terms(const std::vector<Term>& terms, const std::vector<double>& x) {
  double s = 0.0;
  for (const Term& t : terms) s += t.coef * x.at(t.var.index);
  return s;
}

double objective_value(const OptModel& model, const std::vector<double>& x) {
  return evaluate_terms(model.objective().terms, x) + model.objective().constant;
}

double max_violation(const OptModel& model, const std::vector<double>& x) {
  double worst = 0.0;
  const auto& vars = model.variables();
  for (std::size_t j = 0; j < vars.size(); ++j) {
    worst = std::max({worst, vars[j].lower - x[j], x[j] - vars[j].upper});
  }
  for (const Constraint& c : model.constraints()) {
    const double a = evaluate_terms(c.terms, x);
    switch (c.sense) {
      case RowSense::LessEqual: worst = std::max(worst, a - c.rhs); break;
      case RowSense::GreaterEqual: worst = std::max(worst, c.rhs - a); break;
      case RowSense::Equal: worst = std::max(worst, std::abs(a - c.rhs)); break;
    }
  }
  return worst;
}

}  // namespace reluopt::opt
