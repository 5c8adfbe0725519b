#include "reluopt/bb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <queue>
#include <random>

#include "reluopt/errors.hpp"

namespace reluopt::mip {

namespace {

struct Fix {
  std::uint32_t var;
  std::uint8_t value;
};

constexpr int kDiveRounds = 2000;

struct Node {
  double bound = 0.0;  // parent LP value, engine (minimisation) sense
  long long id = 0;
  std::vector<Fix> fixes;
};

struct WorseBound {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

class Search {
 public:
  Search(const opt::OptModel& model, const BBOptions& opts)
      : model_(model), opts_(opts), engine_(model), start_(lp::Clock::now()) {
    const auto& vars = model.variables();
    for (std::size_t j = 0; j < vars.size(); ++j) {
      if (vars[j].kind == opt::VarKind::Binary) binaries_.push_back(j);
    }
    root_lo_.resize(vars.size());
    root_up_.resize(vars.size());
    for (std::size_t j = 0; j < vars.size(); ++j) {
      root_lo_[j] = vars[j].lower;
      root_up_[j] = vars[j].upper;
    }
    cur_lo_ = root_lo_;
    cur_up_ = root_up_;
    priority_.resize(vars.size());
    std::iota(priority_.begin(), priority_.end(), std::size_t{0});
    if (opts.seed != 0) {
      std::mt19937_64 rng(opts.seed);
      std::shuffle(priority_.begin(), priority_.end(), rng);
    }
    deadline_ = start_ + std::chrono::duration_cast<lp::Clock::duration>(
                             std::chrono::duration<double>(std::min(opts.time_limit, 1e9)));
  }

  opt::SolveResult run();

 private:
  void apply(const std::vector<Fix>& fixes);
  lp::LpStatus solve_node() { return engine_.solve(opts_.lp, deadline_); }
  std::optional<std::size_t> most_fractional(const std::vector<double>& x) const;
  void consider_incumbent(std::vector<double> x);
  void try_start();
  void rounding_heuristic(const std::vector<double>& x, const std::vector<Fix>& fixes);
  void fractional_dive(std::vector<double> x, std::vector<Fix> fixes);
  double model_value(double engine_value) const {
    return engine_.sense_sign() * engine_value + model_.objective().constant;
  }
  double relative_gap(double lower) const {
    const double inc = model_value(incumbent_value_);
    const double bnd = model_value(lower);
    return std::abs(inc - bnd) / std::max(std::abs(inc), 1e-9);
  }
  double engine_objective(const std::vector<double>& x) const {
    return engine_.sense_sign() * opt::evaluate_terms(model_.objective().terms, x);
  }
  bool prunable(double bound) const {
    return has_incumbent_ && bound >= incumbent_value_ - 1e-9 * std::max(1.0, std::abs(incumbent_value_));
  }

  const opt::OptModel& model_;
  const BBOptions& opts_;
  lp::SimplexEngine engine_;
  lp::Clock::time_point start_;
  lp::Clock::time_point deadline_;
  std::vector<std::size_t> binaries_;
  std::vector<double> root_lo_, root_up_, cur_lo_, cur_up_;
  std::vector<std::size_t> priority_;

  bool has_incumbent_ = false;
  double incumbent_value_ = opt::kInf;
  std::vector<double> incumbent_;
};

void Search::apply(const std::vector<Fix>& fixes) {
  std::vector<double> lo(binaries_.size()), up(binaries_.size());
  std::vector<std::ptrdiff_t> slot(model_.num_variables(), -1);
  for (std::size_t b = 0; b < binaries_.size(); ++b) {
    slot[binaries_[b]] = static_cast<std::ptrdiff_t>(b);
    lo[b] = root_lo_[binaries_[b]];
    up[b] = root_up_[binaries_[b]];
  }
  for (const Fix& f : fixes) {
    const auto b = static_cast<std::size_t>(slot[f.var]);
    lo[b] = up[b] = f.value;
  }
  for (std::size_t b = 0; b < binaries_.size(); ++b) {
    const std::size_t j = binaries_[b];
    if (lo[b] == cur_lo_[j] && up[b] == cur_up_[j]) continue;
    engine_.set_bounds(j, lo[b], up[b]);
    cur_lo_[j] = lo[b];
    cur_up_[j] = up[b];
  }
}

std::optional<std::size_t> Search::most_fractional(const std::vector<double>& x) const {
  std::optional<std::size_t> pick;
  double best = opts_.integrality_tol;
  for (std::size_t j : binaries_) {
    const double f = std::min(x[j] - std::floor(x[j]), std::ceil(x[j]) - x[j]);
    if (f <= opts_.integrality_tol) continue;
    if (!pick || f > best + 1e-12) {
      pick = j;
      best = f;
    } else if (f >= best - 1e-12 && priority_[j] < priority_[*pick]) {
      pick = j;
    }
  }
  return pick;
}

void Search::consider_incumbent(std::vector<double> x) {
  for (std::size_t j : binaries_) x[j] = std::round(x[j]);
  if (opt::max_violation(model_, x) > 1e-6) return;
  const double value = engine_objective(x);
  if (!has_incumbent_ || value < incumbent_value_) {
    has_incumbent_ = true;
    incumbent_value_ = value;
    incumbent_ = std::move(x);
  }
}

void Search::rounding_heuristic(const std::vector<double>& x, const std::vector<Fix>& fixes) {
  std::vector<Fix> all;
  all.reserve(binaries_.size());
  for (std::size_t j : binaries_) {
    all.push_back(Fix{static_cast<std::uint32_t>(j), static_cast<std::uint8_t>(x[j] >= 0.5 ? 1 : 0)});
  }
  apply(all);
  const bool rounded = solve_node() == lp::LpStatus::Optimal;
  if (rounded) consider_incumbent(engine_.primal());
  if (!rounded || !has_incumbent_) fractional_dive(x, fixes);
  apply(fixes);
}

// Fractional diving: rounds the binary closest to integrality, re-solves, and
// flips that fix once when the relaxation turns infeasible.
void Search::fractional_dive(std::vector<double> x, std::vector<Fix> fixes) {
  std::vector<char> fixed(model_.num_variables(), 0);
  for (const Fix& f : fixes) fixed[f.var] = 1;
  const int rounds = std::min<int>(kDiveRounds, static_cast<int>(binaries_.size()));
  for (int round = 0; round < rounds && lp::Clock::now() <= deadline_; ++round) {
    std::optional<std::size_t> pick;
    double closest = 1.0;
    for (std::size_t j : binaries_) {
      if (fixed[j]) continue;
      const double f = std::abs(x[j] - std::round(x[j]));
      if (f <= opts_.integrality_tol) continue;
      if (!pick || f < closest - 1e-12 || (f <= closest + 1e-12 && priority_[j] < priority_[*pick])) {
        pick = j;
        closest = f;
      }
    }
    if (!pick) {
      consider_incumbent(x);
      return;
    }
    const auto value = static_cast<std::uint8_t>(x[*pick] >= 0.5 ? 1 : 0);
    fixes.push_back(Fix{static_cast<std::uint32_t>(*pick), value});
    fixed[*pick] = 1;
    apply(fixes);
    lp::LpStatus st = solve_node();
    if (st == lp::LpStatus::Infeasible) {
      fixes.back().value = static_cast<std::uint8_t>(1 - value);
      apply(fixes);
      st = solve_node();
    }
    if (st != lp::LpStatus::Optimal || prunable(engine_.objective())) return;
    x = engine_.primal();
  }
}

void Search::try_start() {
  std::vector<Fix> fixes;
  for (std::size_t j : binaries_) {
    const double v = opts_.start[j];
    if (std::isfinite(v)) fixes.push_back(Fix{static_cast<std::uint32_t>(j), static_cast<std::uint8_t>(v >= 0.5 ? 1 : 0)});
  }
  apply(fixes);
  if (solve_node() == lp::LpStatus::Optimal) {
    const std::vector<double> x = engine_.primal();
    if (!most_fractional(x)) consider_incumbent(x);
  }
  apply({});
}

opt::SolveResult Search::run() {
  opt::SolveResult result;
  std::priority_queue<Node, std::vector<Node>, WorseBound> open;
  long long next_id = 0;
  long long nodes = 0;
  double reported_bound = -opt::kInf;
  std::optional<Node> dive = Node{-opt::kInf, next_id++, {}};
  opt::SolveStatus status = opt::SolveStatus::Optimal;
  bool stopped = false;

  auto lower_bound = [&](double current) {
    double lb = current;
    if (!open.empty()) lb = std::min(lb, open.top().bound);
    return lb;
  };

  if (!opts_.start.empty()) try_start();

  while (dive || !open.empty()) {
    if (nodes >= opts_.node_limit) {
      status = opt::SolveStatus::NodeLimit;
      stopped = true;
      break;
    }
    if (lp::Clock::now() > deadline_) {
      status = opt::SolveStatus::TimeLimit;
      stopped = true;
      break;
    }
    Node node;
    if (dive) {
      node = std::move(*dive);
      dive.reset();
    } else {
      node = open.top();
      open.pop();
    }
    if (prunable(node.bound)) continue;
    if (has_incumbent_) {
      const double lb = std::min(node.bound, lower_bound(opt::kInf));
      reported_bound = std::max(reported_bound, lb);
      if (relative_gap(reported_bound) <= opts_.gap && opts_.gap > 0.0) {
        open.push(node);
        status = opt::SolveStatus::GapReached;
        stopped = true;
        break;
      }
    }

    apply(node.fixes);
    const lp::LpStatus lps = solve_node();
    ++nodes;
    if (lps == lp::LpStatus::TimeLimit) {
      open.push(node);
      status = opt::SolveStatus::TimeLimit;
      stopped = true;
      break;
    }
    if (lps == lp::LpStatus::IterationLimit) {
      open.push(node);
      status = opt::SolveStatus::IterationLimit;
      stopped = true;
      break;
    }
    if (lps == lp::LpStatus::Unbounded) {
      if (nodes == 1) {
        result.status = opt::SolveStatus::Unbounded;
        result.certificate = engine_.certificate();
        result.diagnostics = "root relaxation unbounded";
        result.simplex_iterations = engine_.iterations();
        result.bb_nodes = nodes;
        return result;
      }
      continue;
    }
    if (lps == lp::LpStatus::Infeasible) continue;

    const double value = engine_.objective();
    if (prunable(value)) continue;
    const std::vector<double> x = engine_.primal();
    const auto branch = most_fractional(x);
    if (!branch) {
      consider_incumbent(x);
      continue;
    }
    if (opts_.heuristic_every > 0 && (nodes == 1 || nodes % opts_.heuristic_every == 0)) {
      rounding_heuristic(x, node.fixes);
    }

    const std::size_t j = *branch;
    const std::uint8_t first = x[j] >= 0.5 ? 1 : 0;
    Node a{value, next_id++, node.fixes};
    a.fixes.push_back(Fix{static_cast<std::uint32_t>(j), first});
    Node b{value, next_id++, std::move(node.fixes)};
    b.fixes.push_back(Fix{static_cast<std::uint32_t>(j), static_cast<std::uint8_t>(1 - first)});
    if (!has_incumbent_) {
      dive = std::move(a);
      open.push(std::move(b));
    } else {
      open.push(std::move(a));
      open.push(std::move(b));
    }
  }

  result.bb_nodes = nodes;
  result.simplex_iterations = engine_.iterations();
  const double sign = engine_.sense_sign();
  const double constant = model_.objective().constant;
  if (!stopped) {
    if (!has_incumbent_) {
      result.status = opt::SolveStatus::Infeasible;
      result.diagnostics = "search tree exhausted without an integer-feasible point";
      result.objective = sign * opt::kInf;
      result.best_bound = result.objective;
      result.gap = opt::kInf;
      return result;
    }
    result.status = opt::SolveStatus::Optimal;
    result.objective = model_value(incumbent_value_);
    result.best_bound = result.objective;
    result.gap = 0.0;
    result.primal = incumbent_;
    return result;
  }

  result.status = status;
  double lb = open.empty() ? incumbent_value_ : open.top().bound;
  if (dive) lb = std::min(lb, dive->bound);
  if (has_incumbent_) lb = std::min(lb, incumbent_value_);
  reported_bound = std::max(reported_bound, lb);
  result.best_bound = std::isfinite(reported_bound) ? sign * reported_bound + constant : -sign * opt::kInf;
  if (has_incumbent_) {
    result.objective = model_value(incumbent_value_);
    result.primal = incumbent_;
    result.gap = std::isfinite(reported_bound) ? relative_gap(reported_bound) : opt::kInf;
  } else {
    result.objective = sign * opt::kInf;
    result.gap = opt::kInf;
    result.diagnostics = "stopped before an incumbent was found";
  }
  return result;
}

}  // namespace

void BBOptions::validate() const {
  if (!(time_limit > 0.0)) throw ValidationError("time limit must be positive");
  if (!(gap >= 0.0 && gap < 1.0)) throw ValidationError("gap tolerance must lie in [0, 1)");
  if (!(integrality_tol > 0.0 && integrality_tol < 0.5)) throw ValidationError("integrality tolerance must lie in (0, 0.5)");
  if (node_limit <= 0) throw ValidationError("node limit must be positive");
  lp.validate();
}

opt::SolveResult solve_mip(const opt::OptModel& model, const BBOptions& opts) {
  opts.validate();
  if (!opts.start.empty() && opts.start.size() != model.num_variables()) {
    throw ValidationError("starting point has " + std::to_string(opts.start.size()) + " entries, model has " +
                          std::to_string(model.num_variables()) + " variables");
  }
  if (model.num_binaries() == 0) {
    lp::SimplexOptions lpo = opts.lp;
    lpo.time_limit = std::min(lpo.time_limit, opts.time_limit);
    return lp::solve_lp(model, lpo);
  }
  const auto start = lp::Clock::now();
  Search search(model, opts);
  opt::SolveResult result = search.run();
  result.wall_time = std::chrono::duration<double>(lp::Clock::now() - start).count();
  return result;
}

}  // namespace reluopt::mip
