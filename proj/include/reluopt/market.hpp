#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reluopt/embed.hpp"
#include "reluopt/model.hpp"
#include "reluopt/nn.hpp"
#include "reluopt/train.hpp"

namespace reluopt::market {

/// Flexibility delivered at incentive `lambda`: xt / (1 + exp(q - r * lambda)).
double responsiveness(double xt, double q, double r, double lambda);

/// Incentive that makes prosumers deliver x out of xt. Requires 0 < x < xt.
double incentive(double x, double xt, double q, double r);

/// Total purchase cost x * incentive(x, ...), extended by 0 at x = 0.
double purchase_cost(double x, double xt, double q, double r);

/// purchase_cost over a (x, xt, q, r) sample, for dataset generation.
nn::Target purchase_cost_target();

enum class Category { Low, Medium, High };
std::string to_string(Category c);
Category parse_category(const std::string& s);

struct Calibration {
  double price_mu = 1.2;  // log-normal parameters of the low category
  double price_sigma = 0.6;
  double medium_scale = 20.0;
  double high_scale = 400.0;
  nn::Range mean_flex{4.0, 6.0};       // a in a + b sin(...)
  nn::Range flex_amplitude{1.5, 3.0};  // b
  nn::Range rebound_column_sum{0.2, 0.8};
  int rebound_band = 3;  // hours after activation that carry rebound
  nn::Range q{1.0, 8.0};
  nn::Range r{0.5, 5.0};
};

struct MarketInstance {
  int T = 24;
  Category category = Category::Low;
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<double> prices;  // DKK/MWh
  std::vector<double> xbar;    // MWh
  std::vector<double> q;
  std::vector<double> r;
  std::vector<double> rebound;  // T x T row-major, strictly lower triangular

  double a(int t, int j) const { return rebound[static_cast<std::size_t>(t * T + j)]; }
  void validate() const;
};

MarketInstance generate_instance(Category category, int T, std::uint64_t seed, const Calibration& cal = {});

/// Replaces the synthetic prices of `inst` with an ingested profile.
MarketInstance with_prices(MarketInstance inst, const std::vector<double>& prices, const std::string& scenario);

/// CSV `scenario,hour,price_dkk_per_mwh`, hours 1..T. One profile per scenario id.
std::map<std::string, std::vector<double>> ingest_prices(const std::string& csv_text);

nlohmann::json to_json(const MarketInstance& inst);
MarketInstance instance_from_json(const nlohmann::json& doc);
void save_instance(const MarketInstance& inst, const std::filesystem::path& path);
MarketInstance load_instance(const std::filesystem::path& path);

enum class Method { CvxdLP, PCAR, PCTAR, BigM, Hybrid, PWL };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct MethodSpec {
  Method method = Method::CvxdLP;
  /// One penalty per hidden layer (a single value is broadcast to every layer).
  std::vector<double> alpha{0.01};
  double lb = -10.0;
  double ub = 10.0;
  int k = 2;
  int pieces = 4;
  double ratio_margin = 0.01;

  bool uses_network() const { return method != Method::PWL; }
  std::string label() const;
};

/// Model plus handles to the per-hour decision variables.
struct BiddingModel {
  opt::OptModel model;
  std::vector<opt::VarId> x, xt, lp;
  std::vector<opt::Term> penalty;  // already subtracted in the objective
  embed::EmbeddingStats stats;
  /// Feasible "no bid" point (x = 0, xt = xbar) for the neuron binaries of
  /// Big-M and hybrid models, NaN elsewhere; empty for other methods.
  std::vector<double> start;
};

/// lambdaP_t >= 0 and lambdaP_t >= f(x_t, xt_t, q_t, r_t), so the tight
/// embeddings represent max(f, 0). q and r enter the network as constants.
/// Throws KindMismatchError when the method cannot take the network's kind.
BiddingModel build_bidding_model(const MarketInstance& inst, const MethodSpec& spec, const nn::ReluNetwork* net);

struct HourRow {
  int t = 0;
  double x = 0.0;
  double xt = 0.0;
  double lp_surrogate = 0.0;
  double lp_actual = 0.0;
  /// max(f, 0) for the network f at (x, xt, q, r), matching lambdaP >= 0; NaN for PWL.
  double lp_forward = 0.0;
};

struct EvaluationReport {
  std::string method;
  std::string scenario;
  std::vector<HourRow> hours;
  double profit = 0.0;
  double rmse = 0.0;
  double objective = 0.0;
  double wall_time = 0.0;
  double gap = 0.0;
  opt::SolveStatus status = opt::SolveStatus::Optimal;
  /// max_t |surrogate - forward| / (1 + |forward|); NaN for PWL.
  double max_forward_deviation = 0.0;
  std::vector<std::string> warnings;
};

EvaluationReport evaluate_solution(const MarketInstance& inst, const BiddingModel& bm, const opt::SolveResult& result,
                                   const std::string& method, const nn::ReluNetwork* net);

inline constexpr const char* kDetailHeader = "method,scenario,t,x,xtilde,lambdaP_surrogate,lambdaP_actual";
inline constexpr const char* kSummaryHeader = "method,scenario,profit,rmse,walltime,gap,status";

void write_detail_rows(std::ostream& out, const EvaluationReport& rep);
void write_summary_row(std::ostream& out, const EvaluationReport& rep);

/// Decimal text with 17 significant digits ("nan"/"inf" spelled out).
std::string fmt(double v);

}  // namespace reluopt::market
