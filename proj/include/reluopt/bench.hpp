#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "reluopt/market.hpp"
#include "reluopt/nn.hpp"
#include "reluopt/train.hpp"

namespace reluopt::bench {

inline constexpr int kSchemaVersion = 1;

/// Hidden layer widths; inputs (x, x~, q, r) and the scalar output are implied.
struct Architecture {
  std::vector<std::size_t> hidden;

  std::string label() const;  // "10-20-10"
  std::vector<std::size_t> layer_sizes() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

Architecture baseline_architecture();
Architecture parse_architecture(const std::string& text);  // "10,20,10" or "10-20-10"

/// Three hidden layers holding `width` neurons in the baseline 1:2:1 ratio.
std::vector<Architecture> width_architectures(const std::vector<std::size_t>& widths);
std::vector<Architecture> depth_architectures();

/// Either a constant alpha for every neuron or alpha_l = base^l per layer.
struct PenaltySetting {
  std::string label;
  double value = 0.0;
  bool per_layer = false;

  std::vector<double> alphas(std::size_t hidden_layers) const;
  /// "0.01", "1000", "5^l", "2^-l", "0".
  static PenaltySetting parse(const std::string& text);
};

std::vector<PenaltySetting> default_penalty_grid();

struct TrainingSetup {
  std::size_t samples = 30000;
  int epochs = 300;
  std::size_t batch_size = 1000;
  double learning_rate = 1e-4;
  double margin = nn::kDefaultMargin;
  std::uint64_t seed = 0;
};

struct SolverSetup {
  double time_limit = 3600.0;
  double gap = 0.01;
  long long node_limit = std::numeric_limits<long long>::max();
};

struct ScenarioSetup {
  std::vector<market::Category> categories{market::Category::Low};
  int per_category = 1;
  int horizon = 24;
  std::uint64_t first_seed = 1;
  /// When set, each ingested profile replaces the prices of a generated instance.
  std::string price_csv;
};

struct ExperimentPlan {
  ScenarioSetup scenarios;
  std::vector<market::MethodSpec> methods;
  std::vector<Architecture> architectures{baseline_architecture()};
  std::vector<PenaltySetting> penalties = default_penalty_grid();
  bool penalty_control = true;  // adds an alpha = 0 row to penalty sweeps
  TrainingSetup training;
  SolverSetup solver;
  std::uint64_t seed = 0;
  std::string output_dir = "results";
  std::string cache_dir;  // empty: <output_dir>/nets
  int jobs = 1;

  /// Throws ValidationError naming the offending key.
  void validate() const;
  std::filesystem::path network_cache() const;
};

/// Small plan (T = 6, one scenario per category, node-capped MIPs) that
/// exercises every method in about a minute.
ExperimentPlan default_plan();

nlohmann::json to_json(const ExperimentPlan& plan);
/// Unknown keys are rejected with a ValidationError naming the key.
ExperimentPlan plan_from_json(const nlohmann::json& doc);
ExperimentPlan load_plan(const std::filesystem::path& path);

nlohmann::json to_json(const market::MethodSpec& spec);
market::MethodSpec method_from_json(const nlohmann::json& doc);

struct Scenario {
  std::string category;
  market::MarketInstance instance;
};

std::vector<Scenario> build_scenarios(const ExperimentPlan& plan);

/// Network kind a method needs; PWL needs none and gets Unconstrained.
nn::NetworkKind required_kind(const market::MethodSpec& spec);

struct TrainedNetwork {
  nn::ReluNetwork net;
  double train_rmse = 0.0;
  double validation_rmse = 0.0;
};

/// Trains each (architecture, kind) once and keeps the result on disk, keyed by
/// architecture, kind, training setup and seed.
class NetworkCache {
 public:
  NetworkCache(std::filesystem::path dir, TrainingSetup setup);

  const TrainedNetwork& get(const Architecture& arch, const nn::NetworkKind& kind);

 private:
  std::filesystem::path file_for(const Architecture& arch, const nn::NetworkKind& kind) const;
  const nn::Dataset& dataset();

  std::filesystem::path dir_;
  TrainingSetup setup_;
  std::unique_ptr<nn::Dataset> data_;
  std::map<std::string, TrainedNetwork> memory_;
};

/// One scenario x method (x architecture, x penalty) solve.
struct Cell {
  std::string architecture;
  std::string method;  // MethodSpec label
  std::string penalty;  // empty outside penalty sweeps
  std::string category;
  std::string scenario;
  market::EvaluationReport report;
  bool has_solution = false;
  long long iterations = 0;
  long long nodes = 0;
  std::size_t binaries = 0;
  std::size_t rows = 0;
  double train_rmse = std::numeric_limits<double>::quiet_NaN();
  double validation_rmse = std::numeric_limits<double>::quiet_NaN();
  double build_time = 0.0;
  double solve_time = 0.0;
  std::string error;

  bool solved() const;
};

struct SummaryRow {
  std::string architecture;
  std::string method;
  std::string penalty;
  std::string category;
  int scenarios = 0;
  int solved = 0;
  double mean_profit = 0.0;
  double mean_rmse = 0.0;
  double mean_gap_all = 0.0;
  double mean_gap_solved = 0.0;
  double mean_iterations = 0.0;
  double mean_nodes = 0.0;
  double max_forward_deviation = 0.0;
  double train_rmse = 0.0;
  double mean_solve_time = 0.0;  // only written to timing outputs
};

struct BenchResult {
  std::string kind;  // "benchmark", "penalty-sweep", "architecture-sweep"
  std::vector<Cell> cells;
  std::vector<SummaryRow> summary;
};

BenchResult run_benchmark(const ExperimentPlan& plan);
/// PCAR/PCTAR methods of the plan (PCAR alone when there are none) over every
/// penalty setting.
BenchResult penalty_sweep(const ExperimentPlan& plan);
/// Every plan method on every plan architecture, with both network kinds trained.
BenchResult architecture_sweep(const ExperimentPlan& plan);

/// Best penalty per method: highest mean realised profit, ties broken by less
/// solver work. Keys are method names.
std::map<std::string, std::string> best_penalties(const BenchResult& sweep);

/// Writes summary.csv, detail.csv, summary.json, hours_<method>.csv and
/// timing.csv. Every file except timing.csv is a deterministic function of
/// the plan. Returns the paths written.
std::vector<std::filesystem::path> write_outputs(const BenchResult& result, const ExperimentPlan& plan,
                                                 const std::filesystem::path& dir);

void print_summary(std::ostream& out, const BenchResult& result);

}  // namespace reluopt::bench
