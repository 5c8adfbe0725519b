#include "reluopt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "reluopt/bb.hpp"
#include "reluopt/errors.hpp"
#include "reluopt/nn_io.hpp"

namespace reluopt::bench {

using nlohmann::json;
using market::fmt;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string kind_tag(const nn::NetworkKind& kind) {
  if (const auto* c = std::get_if<nn::Convexified>(&kind)) return "cvxd" + std::to_string(c->boundary);
  return "uc";
}

void reject_unknown(const json& doc, std::initializer_list<const char*> known, const std::string& where) {
  if (!doc.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw ValidationError("unknown key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& doc, const char* key, T& out, const std::string& where) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("key '" + where + "." + key + "' has the wrong type");
  }
}

std::string file_safe(const std::string& label) {
  std::string out;
  for (char c : label) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-';
    out += keep ? c : '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct Job {
  const Scenario* scenario = nullptr;
  market::MethodSpec spec;
  const TrainedNetwork* net = nullptr;
  std::string architecture;
  std::string penalty;
};

Cell run_cell(const Job& job, const SolverSetup& solver, std::uint64_t seed) {
  Cell cell;
  cell.architecture = job.architecture;
  cell.method = job.spec.label();
  cell.penalty = job.penalty;
  cell.category = job.scenario->category;
  cell.scenario = job.scenario->instance.scenario;
  if (job.net) {
    cell.train_rmse = job.net->train_rmse;
    cell.validation_rmse = job.net->validation_rmse;
  }
  cell.report.method = cell.method;
  cell.report.scenario = cell.scenario;
  cell.report.profit = std::numeric_limits<double>::quiet_NaN();
  cell.report.rmse = std::numeric_limits<double>::quiet_NaN();
  cell.report.gap = std::numeric_limits<double>::quiet_NaN();
  cell.report.max_forward_deviation = std::numeric_limits<double>::quiet_NaN();
  try {
    const nn::ReluNetwork* net = job.net ? &job.net->net : nullptr;
    const auto built = Clock::now();
    const market::BiddingModel bm = market::build_bidding_model(job.scenario->instance, job.spec, net);
    cell.build_time = seconds_since(built);
    cell.binaries = bm.model.num_binaries();
    cell.rows = bm.model.num_constraints();

    mip::BBOptions opts;
    opts.time_limit = solver.time_limit;
    opts.gap = solver.gap;
    opts.node_limit = solver.node_limit;
    opts.seed = seed;
    opts.lp.parallel_kernels = false;
    opts.start = bm.start;
    const opt::SolveResult r = mip::solve_mip(bm.model, opts);
    cell.solve_time = r.wall_time;
    cell.iterations = r.simplex_iterations;
    cell.nodes = r.bb_nodes;
    cell.report.status = r.status;
    if (r.has_solution()) {
      cell.report = market::evaluate_solution(job.scenario->instance, bm, r, cell.method, net);
      cell.has_solution = true;
    } else {
      cell.report.status = r.status;
    }
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

std::vector<Cell> run_jobs(const std::vector<Job>& jobs, const ExperimentPlan& plan) {
  std::vector<Cell> cells(jobs.size());
  const int n = static_cast<int>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(plan.jobs)
  for (int i = 0; i < n; ++i) {
    cells[static_cast<std::size_t>(i)] = run_cell(jobs[static_cast<std::size_t>(i)], plan.solver, plan.seed);
  }
  return cells;
}

// Groups cells by (architecture, method, penalty, category) in first-seen order.
std::vector<SummaryRow> summarise(const std::vector<Cell>& cells) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<const Cell*>> members;
  for (const Cell& c : cells) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& r) {
      return r.architecture == c.architecture && r.method == c.method && r.penalty == c.penalty &&
             r.category == c.category;
    });
    if (it == rows.end()) {
      SummaryRow r;
      r.architecture = c.architecture;
      r.method = c.method;
      r.penalty = c.penalty;
      r.category = c.category;
      rows.push_back(r);
      members.emplace_back();
      it = rows.end() - 1;
    }
    members[static_cast<std::size_t>(it - rows.begin())].push_back(&c);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SummaryRow& r = rows[i];
    std::vector<double> profit, rmse, gap_all, gap_solved, iters, nodes, times;
    double dev = 0.0;
    bool any_dev = false;
    r.train_rmse = members[i].front()->train_rmse;
    for (const Cell* c : members[i]) {
      ++r.scenarios;
      iters.push_back(static_cast<double>(c->iterations));
      nodes.push_back(static_cast<double>(c->nodes));
      times.push_back(c->solve_time);
      if (c->solved()) ++r.solved;
      if (!c->has_solution) continue;
      profit.push_back(c->report.profit);
      rmse.push_back(c->report.rmse);
      gap_all.push_back(c->report.gap);
      if (c->solved()) gap_solved.push_back(c->report.gap);
      if (!std::isnan(c->report.max_forward_deviation)) {
        dev = std::max(dev, c->report.max_forward_deviation);
        any_dev = true;
      }
    }
    r.mean_profit = mean(profit);
    r.mean_rmse = mean(rmse);
    r.mean_gap_all = mean(gap_all);
    r.mean_gap_solved = mean(gap_solved);
    r.mean_iterations = mean(iters);
    r.mean_nodes = mean(nodes);
    r.mean_solve_time = mean(times);
    r.max_forward_deviation = any_dev ? dev : std::numeric_limits<double>::quiet_NaN();
  }
  return rows;
}

json cell_json(const Cell& c) {
  json hours = json::array();
  for (const market::HourRow& h : c.report.hours) {
    hours.push_back({{"t", h.t}, {"x", fmt(h.x)}, {"xtilde", fmt(h.xt)}, {"lambdaP_surrogate", fmt(h.lp_surrogate)},
                     {"lambdaP_actual", fmt(h.lp_actual)}, {"lambdaP_forward", fmt(h.lp_forward)}});
  }
  return {{"architecture", c.architecture},
          {"method", c.method},
          {"penalty", c.penalty},
          {"category", c.category},
          {"scenario", c.scenario},
          {"status", c.error.empty() ? std::string(opt::to_string(c.report.status)) : "Error"},
          {"error", c.error},
          {"profit", fmt(c.report.profit)},
          {"rmse", fmt(c.report.rmse)},
          {"objective", fmt(c.has_solution ? c.report.objective : std::numeric_limits<double>::quiet_NaN())},
          {"gap", fmt(c.report.gap)},
          {"iterations", c.iterations},
          {"nodes", c.nodes},
          {"binaries", c.binaries},
          {"rows", c.rows},
          {"train_rmse", fmt(c.train_rmse)},
          {"max_forward_deviation", fmt(c.report.max_forward_deviation)},
          {"warnings", c.report.warnings},
          {"hours", std::move(hours)}};
}

json summary_json(const SummaryRow& r) {
  return {{"architecture", r.architecture},
          {"method", r.method},
          {"penalty", r.penalty},
          {"category", r.category},
          {"scenarios", r.scenarios},
          {"solved", r.solved},
          {"mean_profit", fmt(r.mean_profit)},
          {"mean_rmse", fmt(r.mean_rmse)},
          {"mean_gap_all", fmt(r.mean_gap_all)},
          {"mean_gap_solved", fmt(r.mean_gap_solved)},
          {"mean_iterations", fmt(r.mean_iterations)},
          {"mean_nodes", fmt(r.mean_nodes)},
          {"max_forward_deviation", fmt(r.max_forward_deviation)},
          {"train_rmse", fmt(r.train_rmse)}};
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string status_of(const Cell& c) {
  return c.error.empty() ? std::string(opt::to_string(c.report.status)) : "Error";
}

}  // namespace

std::string Architecture::label() const {
  std::string s;
  for (std::size_t i = 0; i < hidden.size(); ++i) s += (i ? "-" : "") + std::to_string(hidden[i]);
  return s;
}

std::vector<std::size_t> Architecture::layer_sizes() const {
  std::vector<std::size_t> sizes{nn::kFeatures};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return sizes;
}

Architecture baseline_architecture() { return Architecture{{10, 20, 10}}; }

Architecture parse_architecture(const std::string& text) {
  Architecture a;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, text.find(',') != std::string::npos ? ',' : '-')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || token.empty() || v <= 0) {
      throw ValidationError("architecture '" + text + "' must be positive widths separated by ','");
    }
    a.hidden.push_back(static_cast<std::size_t>(v));
  }
  if (a.hidden.empty()) throw ValidationError("architecture needs at least one hidden layer");
  return a;
}

std::vector<Architecture> width_architectures(const std::vector<std::size_t>& widths) {
  std::vector<Architecture> out;
  for (std::size_t w : widths) {
    if (w < 4 || w % 4 != 0) throw ValidationError("width " + std::to_string(w) + " must be a positive multiple of 4");
    out.push_back(Architecture{{w / 4, w / 2, w / 4}});
  }
  return out;
}

std::vector<Architecture> depth_architectures() {
  return {Architecture{{40}}, Architecture{{20, 20}}, Architecture{{5, 15, 15, 5}}, Architecture{{2, 8, 20, 8, 2}}};
}

std::vector<double> PenaltySetting::alphas(std::size_t hidden_layers) const {
  std::vector<double> a(hidden_layers, value);
  if (per_layer) {
    for (std::size_t l = 0; l < hidden_layers; ++l) a[l] = std::pow(value, static_cast<double>(l + 1));
  }
  return a;
}

PenaltySetting PenaltySetting::parse(const std::string& text) {
  PenaltySetting p;
  p.label = text;
  std::string num = text;
  double sign = 1.0;
  if (const auto caret = text.find('^'); caret != std::string::npos) {
    const std::string exp = text.substr(caret + 1);
    if (exp != "l" && exp != "-l") throw ValidationError("penalty '" + text + "' must end in ^l or ^-l");
    p.per_layer = true;
    sign = exp == "l" ? 1.0 : -1.0;
    num = text.substr(0, caret);
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(num, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (num.empty() || used != num.size() || !std::isfinite(v) || v < 0.0 || (p.per_layer && v <= 0.0)) {
    throw ValidationError("cannot parse penalty '" + text + "'");
  }
  p.value = p.per_layer && sign < 0.0 ? 1.0 / v : v;
  return p;
}

std::vector<PenaltySetting> default_penalty_grid() {
  std::vector<PenaltySetting> g;
  for (const char* s : {"0.01", "1", "10", "1000", "5^l", "2^l", "2^-l", "5^-l", "10^-l"}) {
    g.push_back(PenaltySetting::parse(s));
  }
  return g;
}

void ExperimentPlan::validate() const {
  if (scenarios.categories.empty()) throw ValidationError("plan key 'scenarios.categories' must not be empty");
  if (scenarios.per_category < 1) throw ValidationError("plan key 'scenarios.per_category' must be at least 1");
  if (scenarios.horizon < 1) throw ValidationError("plan key 'scenarios.horizon' must be at least 1");
  if (methods.empty()) throw ValidationError("plan key 'methods' must not be empty");
  for (const market::MethodSpec& m : methods) {
    const bool penalised = m.method == market::Method::PCAR || m.method == market::Method::PCTAR;
    if (penalised && m.alpha.empty()) throw ValidationError("plan key 'methods' entry " + m.label() + " needs 'alpha'");
    if (m.method == market::Method::PWL && m.pieces < 1) throw ValidationError("plan key 'methods.pieces' must be >= 1");
    if (m.method == market::Method::Hybrid && m.k < 1) throw ValidationError("plan key 'methods.k' must be >= 1");
  }
  if (architectures.empty()) throw ValidationError("plan key 'architectures' must not be empty");
  if (training.samples < 2) throw ValidationError("plan key 'training.samples' must be at least 2");
  if (training.epochs < 0) throw ValidationError("plan key 'training.epochs' must be non-negative");
  if (training.batch_size < 1) throw ValidationError("plan key 'training.batch_size' must be at least 1");
  if (!(training.learning_rate > 0.0)) throw ValidationError("plan key 'training.learning_rate' must be positive");
  if (!(solver.time_limit > 0.0)) throw ValidationError("plan key 'solver.time_limit' must be positive");
  if (!(solver.gap >= 0.0)) throw ValidationError("plan key 'solver.gap' must be non-negative");
  if (solver.node_limit < 1) throw ValidationError("plan key 'solver.node_limit' must be at least 1");
  if (jobs < 1) throw ValidationError("plan key 'jobs' must be at least 1");
}

std::filesystem::path ExperimentPlan::network_cache() const {
  return cache_dir.empty() ? std::filesystem::path(output_dir) / "nets" : std::filesystem::path(cache_dir);
}

ExperimentPlan default_plan() {
  ExperimentPlan p;
  p.scenarios.categories = {market::Category::Low, market::Category::Medium, market::Category::High};
  p.scenarios.per_category = 1;
  p.scenarios.horizon = 6;
  using market::Method;
  market::MethodSpec hybrid{Method::Hybrid};
  hybrid.k = 2;
  p.methods = {market::MethodSpec{Method::CvxdLP}, market::MethodSpec{Method::PCAR}, market::MethodSpec{Method::PCTAR},
               market::MethodSpec{Method::BigM}, hybrid, market::MethodSpec{Method::PWL}};
  p.training.epochs = 100;
  p.solver.node_limit = 300;
  return p;
}

json to_json(const market::MethodSpec& s) {
  json doc{{"method", market::to_string(s.method)}};
  switch (s.method) {
    case market::Method::PCAR: doc["alpha"] = s.alpha; break;
    case market::Method::PCTAR:
      doc["alpha"] = s.alpha;
      doc["lb"] = s.lb;
      doc["ub"] = s.ub;
      break;
    case market::Method::Hybrid: doc["k"] = s.k; break;
    case market::Method::PWL:
      doc["pieces"] = s.pieces;
      doc["ratio_margin"] = s.ratio_margin;
      break;
    default: break;
  }
  return doc;
}

market::MethodSpec method_from_json(const json& doc) {
  market::MethodSpec s;
  if (doc.is_string()) {
    s.method = market::parse_method(doc.get<std::string>());
    return s;
  }
  reject_unknown(doc, {"method", "alpha", "lb", "ub", "k", "pieces", "ratio_margin"}, "methods");
  if (!doc.contains("method")) throw ValidationError("plan key 'methods.method' is required");
  std::string name;
  read(doc, "method", name, "methods");
  s.method = market::parse_method(name);
  if (doc.contains("alpha") && doc.at("alpha").is_number()) {
    s.alpha = {doc.at("alpha").get<double>()};
  } else {
    read(doc, "alpha", s.alpha, "methods");
  }
  read(doc, "lb", s.lb, "methods");
  read(doc, "ub", s.ub, "methods");
  read(doc, "k", s.k, "methods");
  read(doc, "pieces", s.pieces, "methods");
  read(doc, "ratio_margin", s.ratio_margin, "methods");
  return s;
}

json to_json(const ExperimentPlan& p) {
  json cats = json::array();
  for (market::Category c : p.scenarios.categories) cats.push_back(market::to_string(c));
  json methods = json::array();
  for (const auto& m : p.methods) methods.push_back(to_json(m));
  json archs = json::array();
  for (const auto& a : p.architectures) archs.push_back(a.hidden);
  json pens = json::array();
  for (const auto& s : p.penalties) pens.push_back(s.label);
  return {{"format", "experiment-plan"},
          {"version", kSchemaVersion},
          {"scenarios",
           {{"categories", cats},
            {"per_category", p.scenarios.per_category},
            {"horizon", p.scenarios.horizon},
            {"first_seed", p.scenarios.first_seed},
            {"price_csv", p.scenarios.price_csv}}},
          {"methods", methods},
          {"architectures", archs},
          {"penalties", pens},
          {"penalty_control", p.penalty_control},
          {"training",
           {{"samples", p.training.samples},
            {"epochs", p.training.epochs},
            {"batch_size", p.training.batch_size},
            {"learning_rate", p.training.learning_rate},
            {"margin", p.training.margin},
            {"seed", p.training.seed}}},
          {"solver",
           {{"time_limit", p.solver.time_limit}, {"gap", p.solver.gap}, {"node_limit", p.solver.node_limit}}},
          {"seed", p.seed},
          {"output_dir", p.output_dir},
          {"cache_dir", p.cache_dir},
          {"jobs", p.jobs}};
}

ExperimentPlan plan_from_json(const json& doc) {
  reject_unknown(doc,
                 {"format", "version", "scenarios", "methods", "architectures", "penalties", "penalty_control",
                  "training", "solver", "seed", "output_dir", "cache_dir", "jobs"},
                 "plan");
  ExperimentPlan p;
  if (doc.contains("format") && doc.at("format") != "experiment-plan") {
    throw ValidationError("plan key 'format' must be 'experiment-plan'");
  }
  if (doc.contains("version") && doc.at("version") != kSchemaVersion) {
    throw ValidationError("plan key 'version' is unsupported");
  }
  if (doc.contains("scenarios")) {
    const json& s = doc.at("scenarios");
    reject_unknown(s, {"categories", "per_category", "horizon", "first_seed", "price_csv"}, "scenarios");
    if (s.contains("categories")) {
      std::vector<std::string> names;
      read(s, "categories", names, "scenarios");
      p.scenarios.categories.clear();
      for (const std::string& n : names) p.scenarios.categories.push_back(market::parse_category(n));
    }
    read(s, "per_category", p.scenarios.per_category, "scenarios");
    read(s, "horizon", p.scenarios.horizon, "scenarios");
    read(s, "first_seed", p.scenarios.first_seed, "scenarios");
    read(s, "price_csv", p.scenarios.price_csv, "scenarios");
  }
  if (doc.contains("methods")) {
    if (!doc.at("methods").is_array()) throw ValidationError("plan key 'methods' must be an array");
    for (const json& m : doc.at("methods")) p.methods.push_back(method_from_json(m));
  }
  if (doc.contains("architectures")) {
    if (!doc.at("architectures").is_array()) throw ValidationError("plan key 'architectures' must be an array");
    p.architectures.clear();
    for (const json& a : doc.at("architectures")) {
      if (a.is_string()) {
        p.architectures.push_back(parse_architecture(a.get<std::string>()));
        continue;
      }
      Architecture arch;
      try {
        arch.hidden = a.get<std::vector<std::size_t>>();
      } catch (const json::exception&) {
        throw ValidationError("plan key 'architectures' entries must be width lists");
      }
      if (arch.hidden.empty() || std::find(arch.hidden.begin(), arch.hidden.end(), 0u) != arch.hidden.end()) {
        throw ValidationError("plan key 'architectures' entries need positive widths");
      }
      p.architectures.push_back(arch);
    }
  }
  if (doc.contains("penalties")) {
    std::vector<std::string> labels;
    read(doc, "penalties", labels, "plan");
    p.penalties.clear();
    for (const std::string& l : labels) p.penalties.push_back(PenaltySetting::parse(l));
  }
  read(doc, "penalty_control", p.penalty_control, "plan");
  if (doc.contains("training")) {
    const json& t = doc.at("training");
    reject_unknown(t, {"samples", "epochs", "batch_size", "learning_rate", "margin", "seed"}, "training");
    read(t, "samples", p.training.samples, "training");
    read(t, "epochs", p.training.epochs, "training");
    read(t, "batch_size", p.training.batch_size, "training");
    read(t, "learning_rate", p.training.learning_rate, "training");
    read(t, "margin", p.training.margin, "training");
    read(t, "seed", p.training.seed, "training");
  }
  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    reject_unknown(s, {"time_limit", "gap", "node_limit"}, "solver");
    read(s, "time_limit", p.solver.time_limit, "solver");
    read(s, "gap", p.solver.gap, "solver");
    read(s, "node_limit", p.solver.node_limit, "solver");
  }
  read(doc, "seed", p.seed, "plan");
  read(doc, "output_dir", p.output_dir, "plan");
  read(doc, "cache_dir", p.cache_dir, "plan");
  read(doc, "jobs", p.jobs, "plan");
  p.validate();
  return p;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read plan " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse plan " + path.string() + ": " + e.what());
  }
  return plan_from_json(doc);
}

std::vector<Scenario> build_scenarios(const ExperimentPlan& plan) {
  std::vector<Scenario> out;
  const ScenarioSetup& s = plan.scenarios;
  if (!s.price_csv.empty()) {
    std::ifstream in(s.price_csv);
    if (!in) throw IoError("cannot read prices " + s.price_csv);
    std::stringstream text;
    text << in.rdbuf();
    std::uint64_t seed = s.first_seed;
    for (const auto& [name, prices] : market::ingest_prices(text.str())) {
      market::MarketInstance base =
          market::generate_instance(s.categories.front(), static_cast<int>(prices.size()), seed++);
      out.push_back(Scenario{"ingested", market::with_prices(std::move(base), prices, name)});
    }
    return out;
  }
  for (market::Category c : s.categories) {
    for (int i = 0; i < s.per_category; ++i) {
      out.push_back(Scenario{market::to_string(c),
                             market::generate_instance(c, s.horizon, s.first_seed + static_cast<std::uint64_t>(i))});
    }
  }
  return out;
}

nn::NetworkKind required_kind(const market::MethodSpec& spec) {
  switch (spec.method) {
    case market::Method::CvxdLP: return nn::Convexified{1};
    case market::Method::Hybrid: return nn::Convexified{spec.k};
    default: return nn::Unconstrained{};
  }
}

NetworkCache::NetworkCache(std::filesystem::path dir, TrainingSetup setup) : dir_(std::move(dir)), setup_(setup) {}

std::filesystem::path NetworkCache::file_for(const Architecture& arch, const nn::NetworkKind& kind) const {
  char lr[32];
  std::snprintf(lr, sizeof lr, "%g", setup_.learning_rate);
  return dir_ / (kind_tag(kind) + "_" + arch.label() + "_n" + std::to_string(setup_.samples) + "_e" +
                 std::to_string(setup_.epochs) + "_b" + std::to_string(setup_.batch_size) + "_lr" + lr + "_s" +
                 std::to_string(setup_.seed) + ".json");
}

const nn::Dataset& NetworkCache::dataset() {
  if (!data_) {
    nn::DatasetBounds bounds;
    data_ = std::make_unique<nn::Dataset>(
        nn::make_dataset(market::purchase_cost_target(), bounds, setup_.samples, setup_.margin, setup_.seed));
  }
  return *data_;
}

const TrainedNetwork& NetworkCache::get(const Architecture& arch, const nn::NetworkKind& kind) {
  const std::filesystem::path path = file_for(arch, kind);
  const std::string key = path.filename().string();
  if (auto it = memory_.find(key); it != memory_.end()) return it->second;

  TrainedNetwork t;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    json doc;
    try {
      doc = json::parse(in);
      t.net = nn::network_from_json(doc.at("network"));
      t.train_rmse = doc.at("train_rmse").get<double>();
      t.validation_rmse = doc.at("validation_rmse").get<double>();
      return memory_.emplace(key, std::move(t)).first->second;
    } catch (const std::exception& e) {
      throw ValidationError("corrupt network cache entry " + path.string() + ": " + e.what());
    }
  }
  t.net = nn::ReluNetwork::random(arch.layer_sizes(), kind, setup_.seed);
  nn::TrainConfig cfg;
  cfg.epochs = setup_.epochs;
  cfg.batch_size = setup_.batch_size;
  cfg.learning_rate = setup_.learning_rate;
  cfg.seed = setup_.seed;
  const nn::TrainReport rep = nn::fit(t.net, dataset(), cfg);
  t.train_rmse = rep.train_rmse;
  t.validation_rmse = rep.validation_rmse;

  std::filesystem::create_directories(dir_);
  const json doc{{"network", nn::to_json(t.net)}, {"train_rmse", t.train_rmse}, {"validation_rmse", t.validation_rmse}};
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out = open_out(tmp);
    out << doc.dump(1) << '\n';
  }
  std::filesystem::rename(tmp, path);
  return memory_.emplace(key, std::move(t)).first->second;
}

bool Cell::solved() const {
  return error.empty() && has_solution &&
         (report.status == opt::SolveStatus::Optimal || report.status == opt::SolveStatus::GapReached);
}

BenchResult run_benchmark(const ExperimentPlan& plan) {
  plan.validate();
  const std::vector<Scenario> scenarios = build_scenarios(plan);
  NetworkCache cache(plan.network_cache(), plan.training);
  const Architecture& arch = plan.architectures.front();
  std::vector<Job> jobs;
  for (const market::MethodSpec& m : plan.methods) {
    const TrainedNetwork* net = m.uses_network() ? &cache.get(arch, required_kind(m)) : nullptr;
    for (const Scenario& s : scenarios) jobs.push_back(Job{&s, m, net, arch.label(), ""});
  }
  BenchResult r;
  r.kind = "benchmark";
  r.cells = run_jobs(jobs, plan);
  r.summary = summarise(r.cells);
  return r;
}

BenchResult penalty_sweep(const ExperimentPlan& plan) {
  plan.validate();
  std::vector<market::MethodSpec> methods;
  for (const market::MethodSpec& m : plan.methods) {
    if (m.method == market::Method::PCAR || m.method == market::Method::PCTAR) methods.push_back(m);
  }
  if (methods.empty()) methods.push_back(market::MethodSpec{market::Method::PCAR});
  std::vector<PenaltySetting> grid = plan.penalties;
  if (plan.penalty_control) grid.push_back(PenaltySetting::parse("0"));

  const std::vector<Scenario> scenarios = build_scenarios(plan);
  NetworkCache cache(plan.network_cache(), plan.training);
  const Architecture& arch = plan.architectures.front();
  const TrainedNetwork& net = cache.get(arch, nn::Unconstrained{});
  std::vector<Job> jobs;
  for (const market::MethodSpec& base : methods) {
    for (const PenaltySetting& p : grid) {
      market::MethodSpec m = base;
      m.alpha = p.alphas(arch.hidden.size());
      for (const Scenario& s : scenarios) jobs.push_back(Job{&s, m, &net, arch.label(), p.label});
    }
  }
  BenchResult r;
  r.kind = "penalty-sweep";
  r.cells = run_jobs(jobs, plan);
  r.summary = summarise(r.cells);
  return r;
}

BenchResult architecture_sweep(const ExperimentPlan& plan) {
  plan.validate();
  const std::vector<Scenario> scenarios = build_scenarios(plan);
  NetworkCache cache(plan.network_cache(), plan.training);
  std::vector<Job> jobs;
  for (const Architecture& arch : plan.architectures) {
    cache.get(arch, nn::Unconstrained{});
    cache.get(arch, nn::Convexified{1});
    for (const market::MethodSpec& m : plan.methods) {
      const TrainedNetwork* net = m.uses_network() ? &cache.get(arch, required_kind(m)) : nullptr;
      for (const Scenario& s : scenarios) jobs.push_back(Job{&s, m, net, arch.label(), ""});
    }
  }
  BenchResult r;
  r.kind = "architecture-sweep";
  r.cells = run_jobs(jobs, plan);
  r.summary = summarise(r.cells);
  return r;
}

std::map<std::string, std::string> best_penalties(const BenchResult& sweep) {
  struct Score {
    std::vector<double> profit;
    double work = 0.0;
  };
  std::map<std::string, std::vector<std::pair<std::string, Score>>> by_method;
  for (const Cell& c : sweep.cells) {
    const std::string method = c.method.substr(0, c.method.find('['));
    auto& list = by_method[method];
    auto it = std::find_if(list.begin(), list.end(), [&](const auto& e) { return e.first == c.penalty; });
    if (it == list.end()) {
      list.emplace_back(c.penalty, Score{});
      it = list.end() - 1;
    }
    it->second.profit.push_back(c.has_solution ? c.report.profit : -std::numeric_limits<double>::infinity());
    it->second.work += static_cast<double>(c.iterations + c.nodes);
  }
  std::map<std::string, std::string> best;
  for (const auto& [method, list] : by_method) {
    const std::pair<std::string, Score>* winner = nullptr;
    double winner_profit = 0.0;
    for (const auto& e : list) {
      const double p = mean(e.second.profit);
      if (!winner || p > winner_profit || (p == winner_profit && e.second.work < winner->second.work)) {
        winner = &e;
        winner_profit = p;
      }
    }
    if (winner) best[method] = winner->first;
  }
  return best;
}

std::vector<std::filesystem::path> write_outputs(const BenchResult& result, const ExperimentPlan& plan,
                                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const std::string meta = "# reluopt " + result.kind + " schema=" + std::to_string(kSchemaVersion) +
                           " seed=" + std::to_string(plan.seed) +
                           " training_seed=" + std::to_string(plan.training.seed) +
                           " first_scenario_seed=" + std::to_string(plan.scenarios.first_seed) + "\n";
  {
    const auto path = dir / "summary.csv";
    std::ofstream out = open_out(path);
    out << meta
        << "architecture,method,penalty,category,scenarios,solved,mean_profit,mean_rmse,mean_gap_all,"
           "mean_gap_solved,mean_iterations,mean_nodes,max_forward_deviation,train_rmse\n";
    for (const SummaryRow& r : result.summary) {
      out << r.architecture << ',' << r.method << ',' << r.penalty << ',' << r.category << ',' << r.scenarios << ','
          << r.solved << ',' << fmt(r.mean_profit) << ',' << fmt(r.mean_rmse) << ',' << fmt(r.mean_gap_all) << ','
          << fmt(r.mean_gap_solved) << ',' << fmt(r.mean_iterations) << ',' << fmt(r.mean_nodes) << ','
          << fmt(r.max_forward_deviation) << ',' << fmt(r.train_rmse) << '\n';
    }
    written.push_back(path);
  }
  {
    const auto path = dir / "detail.csv";
    std::ofstream out = open_out(path);
    out << meta
        << "architecture,method,penalty,category,scenario,status,profit,rmse,objective,gap,iterations,nodes,"
           "binaries,rows,max_forward_deviation,train_rmse,error\n";
    for (const Cell& c : result.cells) {
      out << c.architecture << ',' << c.method << ',' << c.penalty << ',' << c.category << ',' << c.scenario << ','
          << status_of(c) << ',' << fmt(c.report.profit) << ',' << fmt(c.report.rmse) << ','
          << fmt(c.has_solution ? c.report.objective : std::numeric_limits<double>::quiet_NaN()) << ','
          << fmt(c.report.gap) << ',' << c.iterations << ',' << c.nodes << ',' << c.binaries << ',' << c.rows << ','
          << fmt(c.report.max_forward_deviation) << ',' << fmt(c.train_rmse) << ',';
      std::string err = c.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      out << err << '\n';
    }
    written.push_back(path);
  }
  {
    std::vector<std::string> labels;
    for (const Cell& c : result.cells) {
      const std::string key = c.method + (c.penalty.empty() ? "" : "_" + c.penalty);
      if (std::find(labels.begin(), labels.end(), key) == labels.end()) labels.push_back(key);
    }
    for (const std::string& key : labels) {
      const auto path = dir / ("hours_" + file_safe(key) + ".csv");
      std::ofstream out = open_out(path);
      out << meta << "architecture,category," << market::kDetailHeader << '\n';
      for (const Cell& c : result.cells) {
        if (c.method + (c.penalty.empty() ? "" : "_" + c.penalty) != key) continue;
        std::ostringstream rows;
        market::write_detail_rows(rows, c.report);
        std::istringstream lines(rows.str());
        std::string line;
        while (std::getline(lines, line)) out << c.architecture << ',' << c.category << ',' << line << '\n';
      }
      written.push_back(path);
    }
  }
  {
    json cells = json::array();
    for (const Cell& c : result.cells) cells.push_back(cell_json(c));
    json summary = json::array();
    for (const SummaryRow& r : result.summary) summary.push_back(summary_json(r));
    // Locations and parallelism do not change results, so they are not echoed.
    json echoed = to_json(plan);
    for (const char* key : {"output_dir", "cache_dir", "jobs"}) echoed.erase(key);
    json doc{{"format", "bench-" + result.kind},
             {"version", kSchemaVersion},
             {"seed", plan.seed},
             {"plan", std::move(echoed)},
             {"summary", std::move(summary)},
             {"cells", std::move(cells)}};
    if (result.kind == "penalty-sweep") doc["best_penalty"] = best_penalties(result);
    const auto path = dir / "summary.json";
    std::ofstream out = open_out(path);
    out << doc.dump(1) << '\n';
    written.push_back(path);
  }
  {
    const auto path = dir / "timing.csv";
    std::ofstream out = open_out(path);
    out << meta << "architecture,method,penalty,category,scenario,build_seconds,solve_seconds\n";
    for (const Cell& c : result.cells) {
      out << c.architecture << ',' << c.method << ',' << c.penalty << ',' << c.category << ',' << c.scenario << ','
          << fmt(c.build_time) << ',' << fmt(c.solve_time) << '\n';
    }
    written.push_back(path);
  }
  return written;
}

void print_summary(std::ostream& out, const BenchResult& result) {
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-24s %-8s %-8s %6s %12s %10s %9s %10s\n", "arch", "method", "penalty",
                "category", "solved", "profit", "rmse", "gap", "time[s]");
  out << line;
  for (const SummaryRow& r : result.summary) {
    const std::string solved = std::to_string(r.solved) + "/" + std::to_string(r.scenarios);
    std::snprintf(line, sizeof line, "%-12s %-24s %-8s %-8s %6s %12.4f %10.4f %9.2e %10.3f\n", r.architecture.c_str(),
                  r.method.c_str(), r.penalty.c_str(), r.category.c_str(), solved.c_str(), r.mean_profit, r.mean_rmse,
                  r.mean_gap_all, r.mean_solve_time);
    out << line;
  }
}

}  // namespace reluopt::bench
