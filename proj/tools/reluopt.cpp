// reluopt command-line entry point.
//
// Exit codes: 0 success, 1 I/O or plan validation, 2 usage, 3 numerical
// failure, 4 method/network mismatch.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <optional>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "reluopt/bb.hpp"
#include "reluopt/bench.hpp"
#include "reluopt/errors.hpp"
#include "reluopt/lp_writer.hpp"
#include "reluopt/market.hpp"
#include "reluopt/nn_io.hpp"
#include "reluopt/train.hpp"

namespace fs = std::filesystem;
using namespace reluopt;

namespace {

enum Exit { kOk = 0, kIo = 1, kUsage = 2, kNumerical = 3, kMismatch = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string config_path;  // only consumed by expand_config

void configurable(CLI::App* sub) {
  sub->add_option("--config", config_path, "JSON file of option values; flags override it");
}

bool given(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// Appends the options of a `--config` file to the command line. The file is a
// flat JSON object keyed by long option names; arrays give several values and
// true sets a flag. Keys already on the command line are skipped.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw UsageError("config file must hold a JSON object");
  auto text = [](const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    throw UsageError("config values must be strings, numbers, booleans or arrays of those");
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : doc.items()) {
    const std::string flag = "--" + key;
    if (given(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    if (value.is_array()) {
      for (const auto& v : value) extra.push_back(text(v));
    } else {
      extra.push_back(text(value));
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::vector<std::size_t> parse_widths(const std::string& text) { return bench::parse_architecture(text).hidden; }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string());
  }
}

std::ofstream open_out(const fs::path& p) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
  std::size_t n = nn::kFullSampleCount;
  std::uint64_t seed = 0;
  double margin = nn::kDefaultMargin;
  std::string out;
};

int gen_data(const GenDataArgs& a) {
  const nn::Dataset data = nn::make_dataset(market::purchase_cost_target(), {}, a.n, a.margin, a.seed);
  std::ofstream out = open_out(a.out);
  nn::write_dataset_csv(out, data);
  if (!out) throw IoError("failed writing " + a.out);
  std::cout << "wrote " << data.size() << " samples to " << a.out << '\n';
  return kOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string arch = "10,20,10";
  std::string kind = "cvxd";
  int k = 1;
  nn::TrainConfig cfg;
  std::string out;
  std::string report;
};

int train(const TrainArgs& a) {
  std::ifstream in(a.data);
  if (!in) throw IoError("cannot read dataset " + a.data);
  const nn::Dataset data = nn::read_dataset_csv(in);
  std::vector<std::size_t> sizes{nn::kFeatures};
  for (std::size_t w : parse_widths(a.arch)) sizes.push_back(w);
  sizes.push_back(1);
  const nn::NetworkKind kind = a.kind == "uc" ? nn::NetworkKind{nn::Unconstrained{}} : nn::NetworkKind{nn::Convexified{a.k}};
  nn::ReluNetwork net = nn::ReluNetwork::random(sizes, kind, a.cfg.seed);
  const nn::TrainReport rep = nn::fit(net, data, a.cfg);
  ensure_parent(a.out);
  nn::save_network(net, a.out);
  const std::string report_path = a.report.empty() ? fs::path(a.out).replace_extension(".report.json").string() : a.report;
  std::ofstream r = open_out(report_path);
  r << nn::to_json(rep).dump(1) << '\n';
  std::printf("%s network %s: train rmse %.6g, validation rmse %.6g (normalised)\n", nn::kind_name(net.kind()).c_str(),
              a.arch.c_str(), rep.train_rmse, rep.validation_rmse);
  return kOk;
}

// ---- solve ----------------------------------------------------------------

struct SolveArgs {
  std::string instance;
  std::string generate;
  std::uint64_t seed = 1;
  int horizon = 24;
  std::string prices;
  std::string scenario;
  std::string net;
  std::string method = "cvxd-lp";
  std::vector<double> alpha{0.01};
  double lb = -10.0;
  double ub = 10.0;
  int k = 2;
  int pieces = 4;
  double time_limit = 3600.0;
  double gap = 0.01;
  long long node_limit = std::numeric_limits<long long>::max();
  std::string export_lp;
  std::string save_instance;
  std::string out_dir = ".";
};

int solve(const SolveArgs& a) {
  market::MarketInstance inst;
  if (!a.instance.empty()) {
    inst = market::load_instance(a.instance);
  } else {
    inst = market::generate_instance(market::parse_category(a.generate.empty() ? "low" : a.generate), a.horizon, a.seed);
  }
  if (!a.prices.empty()) {
    std::ifstream in(a.prices);
    if (!in) throw IoError("cannot read prices " + a.prices);
    std::stringstream text;
    text << in.rdbuf();
    const auto profiles = market::ingest_prices(text.str());
    const std::string name = a.scenario.empty() ? profiles.begin()->first : a.scenario;
    const auto it = profiles.find(name);
    if (it == profiles.end()) throw UsageError("scenario '" + name + "' not found in " + a.prices);
    if (static_cast<int>(it->second.size()) != inst.T) {
      inst = market::generate_instance(inst.category, static_cast<int>(it->second.size()), inst.seed);
    }
    inst = market::with_prices(std::move(inst), it->second, name);
  }
  if (!a.save_instance.empty()) {
    ensure_parent(a.save_instance);
    market::save_instance(inst, a.save_instance);
  }

  market::MethodSpec spec;
  spec.method = market::parse_method(a.method);
  spec.alpha = a.alpha;
  spec.lb = a.lb;
  spec.ub = a.ub;
  spec.k = a.k;
  spec.pieces = a.pieces;

  std::optional<nn::ReluNetwork> net;
  if (spec.uses_network()) {
    if (a.net.empty()) throw UsageError("--net is required for method " + a.method);
    net = nn::load_network(a.net);
  }
  const market::BiddingModel bm = market::build_bidding_model(inst, spec, net ? &*net : nullptr);
  if (!a.export_lp.empty()) {
    ensure_parent(a.export_lp);
    opt::write_lp_file(bm.model, a.export_lp);
  }

  mip::BBOptions opts;
  opts.time_limit = a.time_limit;
  opts.gap = a.gap;
  opts.node_limit = a.node_limit;
  opts.start = bm.start;
  const opt::SolveResult r = mip::solve_mip(bm.model, opts);
  if (!r.has_solution()) {
    std::cerr << "no solution: " << opt::to_string(r.status) << (r.diagnostics.empty() ? "" : " (" + r.diagnostics + ")")
              << '\n';
    return kNumerical;
  }
  const market::EvaluationReport rep = market::evaluate_solution(inst, bm, r, spec.label(), net ? &*net : nullptr);
  for (const std::string& w : rep.warnings) std::cerr << "warning: " << w << '\n';

  const std::string meta = "# reluopt solve scenario=" + inst.scenario + " seed=" + std::to_string(inst.seed) + "\n";
  const fs::path dir(a.out_dir);
  {
    std::ofstream out = open_out(dir / "summary.csv");
    out << meta << market::kSummaryHeader << '\n';
    market::write_summary_row(out, rep);
  }
  {
    std::ofstream out = open_out(dir / "detail.csv");
    out << meta << market::kDetailHeader << '\n';
    market::write_detail_rows(out, rep);
  }
  std::cout << market::kSummaryHeader << '\n';
  market::write_summary_row(std::cout, rep);
  return kOk;
}

// ---- bench / sweep -----------------------------------------------------------

struct BenchArgs {
  std::string plan;
  bool default_plan = false;
  std::string out_dir;
  std::string cache_dir;
  int jobs = 0;
  // sweep only
  bool penalties = false;
  bool architectures = false;
  std::string method;
  std::vector<std::string> widths;
  bool depths = false;
};

bench::ExperimentPlan resolve_plan(const BenchArgs& a) {
  if (a.plan.empty() && !a.default_plan) throw UsageError("give --plan FILE or --default-plan");
  if (!a.plan.empty() && a.default_plan) throw UsageError("--plan and --default-plan are exclusive");
  bench::ExperimentPlan plan = a.default_plan ? bench::default_plan() : bench::load_plan(a.plan);
  if (!a.out_dir.empty()) plan.output_dir = a.out_dir;
  if (!a.cache_dir.empty()) plan.cache_dir = a.cache_dir;
  if (a.jobs > 0) plan.jobs = a.jobs;
  plan.validate();
  return plan;
}

int finish(const bench::BenchResult& result, const bench::ExperimentPlan& plan) {
  for (const fs::path& p : bench::write_outputs(result, plan, plan.output_dir)) std::cerr << "wrote " << p.string() << '\n';
  bench::print_summary(std::cout, result);
  for (const bench::Cell& c : result.cells) {
    if (!c.error.empty()) std::cerr << "cell " << c.method << " " << c.scenario << " failed: " << c.error << '\n';
  }
  return kOk;
}

int run_bench(const BenchArgs& a) {
  const bench::ExperimentPlan plan = resolve_plan(a);
  return finish(bench::run_benchmark(plan), plan);
}

int run_sweep(const BenchArgs& a) {
  if (a.penalties == a.architectures) throw UsageError("sweep needs exactly one of --penalties or --architectures");
  bench::ExperimentPlan plan = resolve_plan(a);
  if (!a.method.empty()) {
    market::MethodSpec m;
    m.method = market::parse_method(a.method);
    plan.methods = {m};
  }
  if (a.penalties) {
    for (const auto& m : plan.methods) {
      if (m.method != market::Method::PCAR && m.method != market::Method::PCTAR) {
        throw UsageError("penalty sweeps take pcar or pctar, not " + market::to_string(m.method));
      }
    }
    const bench::BenchResult r = bench::penalty_sweep(plan);
    for (const auto& [method, best] : bench::best_penalties(r)) std::cout << "best penalty for " << method << ": " << best << '\n';
    return finish(r, plan);
  }
  if (!a.widths.empty() || a.depths) {
    plan.architectures.clear();
    std::vector<std::size_t> w;
    for (const std::string& s : a.widths) {
      std::size_t used = 0;
      long long v = -1;
      try {
        v = std::stoll(s, &used);
      } catch (const std::exception&) {
      }
      if (used != s.size() || v <= 0) throw UsageError("width '" + s + "' is not a positive integer");
      w.push_back(static_cast<std::size_t>(v));
    }
    for (const auto& arch : bench::width_architectures(w)) plan.architectures.push_back(arch);
    if (a.depths) {
      for (const auto& arch : bench::depth_architectures()) plan.architectures.push_back(arch);
    }
  }
  return finish(bench::architecture_sweep(plan), plan);
}

void add_bench_options(CLI::App* sub, BenchArgs& a) {
  sub->add_option("--plan", a.plan, "Experiment plan JSON");
  sub->add_flag("--default-plan", a.default_plan, "Use the built-in desk-scale plan");
  sub->add_option("--out-dir", a.out_dir, "Output directory (overrides the plan)");
  sub->add_option("--cache-dir", a.cache_dir, "Trained network cache (default <out-dir>/nets)");
  sub->add_option("--jobs", a.jobs, "Parallel solve cells (default from the plan, 1)")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimisation over trained ReLU surrogates of a flexibility market"};
  app.require_subcommand(1);

  GenDataArgs g;
  auto* gen = app.add_subcommand("gen-data", "Sample the purchase-cost function into a CSV dataset");
  gen->add_option("--n", g.n, "Sample count")->check(CLI::PositiveNumber);
  gen->add_option("--seed", g.seed, "Random seed");
  gen->add_option("--margin", g.margin, "Keep x <= (1 - margin) * xtilde")->check(CLI::Range(0.0, 0.999));
  gen->add_option("--out", g.out, "Output CSV")->required();
  configurable(gen);

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "Fit a ReLU network to a dataset");
  tr->add_option("--data", t.data, "Dataset CSV")->required();
  tr->add_option("--arch", t.arch, "Hidden widths, e.g. 10,20,10");
  tr->add_option("--kind", t.kind, "cvxd or uc")->check(CLI::IsMember({"cvxd", "uc"}));
  tr->add_option("--k", t.k, "Convexification boundary for cvxd")->check(CLI::PositiveNumber);
  tr->add_option("--epochs", t.cfg.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  tr->add_option("--lr", t.cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--batch", t.cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  tr->add_option("--split", t.cfg.split, "Training fraction")->check(CLI::Range(0.0, 1.0));
  tr->add_option("--seed", t.cfg.seed, "Initialisation and shuffling seed");
  tr->add_option("--out", t.out, "Network JSON")->required();
  tr->add_option("--report", t.report, "Training report JSON (default <out>.report.json)");
  configurable(tr);

  SolveArgs s;
  auto* so = app.add_subcommand("solve", "Build and solve one bidding model");
  so->add_option("--instance", s.instance, "Market instance JSON");
  so->add_option("--generate", s.generate, "Generate an instance of this price category")
      ->check(CLI::IsMember({"low", "medium", "high"}));
  so->add_option("--seed", s.seed, "Instance seed for --generate");
  so->add_option("--horizon", s.horizon, "Hours for --generate")->check(CLI::PositiveNumber);
  so->add_option("--prices", s.prices, "Price CSV replacing the instance prices");
  so->add_option("--scenario", s.scenario, "Scenario id within --prices");
  so->add_option("--net", s.net, "Trained network JSON");
  so->add_option("--method", s.method, "cvxd-lp, pcar, pctar, bigm, hybrid or pwl");
  so->add_option("--alpha", s.alpha, "Penalty, one value or one per hidden layer")->delimiter(',');
  so->add_option("--lb", s.lb, "PCTAR lower neuron bound");
  so->add_option("--ub", s.ub, "PCTAR upper neuron bound");
  so->add_option("--k", s.k, "Hybrid boundary")->check(CLI::PositiveNumber);
  so->add_option("--np", s.pieces, "PWL pieces per axis")->check(CLI::PositiveNumber);
  so->add_option("--time-limit", s.time_limit, "Seconds")->check(CLI::PositiveNumber);
  so->add_option("--gap", s.gap, "Relative MIP gap")->check(CLI::NonNegativeNumber);
  so->add_option("--node-limit", s.node_limit, "Branch-and-bound nodes")->check(CLI::PositiveNumber);
  so->add_option("--export-lp", s.export_lp, "Also write the model as LP text");
  so->add_option("--save-instance", s.save_instance, "Also write the instance JSON");
  so->add_option("--out-dir", s.out_dir, "Directory for summary.csv and detail.csv");
  so->get_option("--instance")->excludes(so->get_option("--generate"));
  configurable(so);

  BenchArgs b;
  auto* be = app.add_subcommand("bench", "Run an experiment plan");
  add_bench_options(be, b);
  configurable(be);

  BenchArgs w;
  auto* sw = app.add_subcommand("sweep", "Penalty or architecture sweep");
  add_bench_options(sw, w);
  sw->add_flag("--penalties", w.penalties, "Sweep the penalty grid");
  sw->add_flag("--architectures", w.architectures, "Sweep network architectures");
  sw->add_option("--method", w.method, "Restrict to one method");
  sw->add_option("--widths", w.widths, "Total widths split 1:2:1, e.g. 20,80")->delimiter(',');
  sw->add_flag("--depths", w.depths, "Add the depth variants");
  configurable(sw);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const IoError& e) {
    std::cerr << "io: " << e.what() << '\n';
    return kIo;
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << '\n';
    return kUsage;
  }
  std::reverse(args.begin(), args.end());  // CLI11 consumes from the back

  try {
    app.parse(args);
  } catch (const CLI::FileError& e) {
    std::cerr << e.what() << '\n';
    return kIo;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_data(g);
    if (*tr) return train(t);
    if (*so) return solve(s);
    if (*be) return run_bench(b);
    if (*sw) return run_sweep(w);
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << '\n';
    return kUsage;
  } catch (const KindMismatchError& e) {
    std::cerr << "mismatch: " << e.what() << '\n';
    return kMismatch;
  } catch (const IoError& e) {
    std::cerr << "io: " << e.what() << '\n';
    return kIo;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical: " << e.what() << '\n';
    return kNumerical;
  } catch (const DomainError& e) {
    std::cerr << "numerical: " << e.what() << '\n';
    return kNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return (*be || *sw) ? kIo : kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
