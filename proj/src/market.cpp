#include "reluopt/market.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "reluopt/errors.hpp"

namespace reluopt::market {

using opt::RowSense;
using opt::Term;
using opt::VarId;

double responsiveness(double xt, double q, double r, double lambda) {
  if (xt == 0.0) return 0.0;
  return xt / (1.0 + std::exp(q - r * lambda));
}

double incentive(double x, double xt, double q, double r) {
  if (!(x > 0.0) || !(x < xt)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "incentive needs 0 < x < xt (x = %.17g, xt = %.17g)", x, xt);
    throw DomainError(buf);
  }
  return (q - std::log(xt / x - 1.0)) / r;
}

double purchase_cost(double x, double xt, double q, double r) {
  if (x == 0.0) return 0.0;
  return x * incentive(x, xt, q, r);
}

nn::Target purchase_cost_target() {
  return [](const nn::Sample& s) { return purchase_cost(s[0], s[1], s[2], s[3]); };
}

std::string to_string(Category c) {
  switch (c) {
    case Category::Low: return "low";
    case Category::Medium: return "medium";
    case Category::High: return "high";
  }
  return "low";
}

Category parse_category(const std::string& s) {
  if (s == "low") return Category::Low;
  if (s == "medium") return Category::Medium;
  if (s == "high") return Category::High;
  throw ValidationError("unknown price category '" + s + "' (expected low, medium or high)");
}

void MarketInstance::validate() const {
  if (T < 1) throw ValidationError("horizon T must be at least 1");
  const auto n = static_cast<std::size_t>(T);
  if (prices.size() != n || xbar.size() != n || q.size() != n || r.size() != n) {
    throw ShapeError("instance vectors must all have length T");
  }
  if (rebound.size() != n * n) throw ShapeError("rebound matrix must be T x T");
  for (std::size_t t = 0; t < n; ++t) {
    if (!std::isfinite(prices[t])) throw ValidationError("non-finite price at hour " + std::to_string(t + 1));
    if (!(xbar[t] >= 0.0) || !std::isfinite(xbar[t])) throw ValidationError("xbar must be finite and >= 0");
    if (!(q[t] >= 0.0) || !(r[t] > 0.0)) throw ValidationError("need q >= 0 and r > 0");
  }
  for (int j = 0; j < T; ++j) {
    double col = 0.0;
    for (int t = 0; t < T; ++t) {
      const double v = a(t, j);
      if (t <= j && v != 0.0) throw ValidationError("rebound matrix must be strictly lower triangular");
      if (v < 0.0) throw ValidationError("rebound entries must be non-negative");
      col += v;
    }
    if (col > 1.0 + 1e-12) throw ValidationError("rebound column " + std::to_string(j + 1) + " sums above 1");
  }
}

MarketInstance generate_instance(Category category, int T, std::uint64_t seed, const Calibration& cal) {
  if (T < 1) throw ValidationError("horizon T must be at least 1");
  std::mt19937_64 rng(seed);
  auto uniform = [&](nn::Range r) { return std::uniform_real_distribution<double>(r.min, r.max)(rng); };
  MarketInstance inst;
  inst.T = T;
  inst.category = category;
  inst.seed = seed;
  inst.scenario = to_string(category) + "-" + std::to_string(seed);
  const auto n = static_cast<std::size_t>(T);

  double scale = 1.0;
  if (category == Category::Medium) scale = cal.medium_scale;
  if (category == Category::High) scale = cal.high_scale;
  std::lognormal_distribution<double> price(cal.price_mu, cal.price_sigma);
  for (std::size_t t = 0; t < n; ++t) inst.prices.push_back(scale * price(rng));

  const double a = uniform(cal.mean_flex);
  const double b = std::min(uniform(cal.flex_amplitude), a);
  const double phi = uniform(nn::Range{0.0, 2.0 * std::numbers::pi});
  for (std::size_t t = 1; t <= n; ++t) {
    inst.xbar.push_back(a + b * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / T + phi));
  }

  inst.rebound.assign(n * n, 0.0);
  for (int j = 0; j < T; ++j) {
    const int last = std::min(T - 1, j + cal.rebound_band);
    if (last <= j) continue;
    double sum = 0.0;
    for (int t = j + 1; t <= last; ++t) {
      const double v = uniform(nn::Range{0.0, 1.0});
      inst.rebound[static_cast<std::size_t>(t * T + j)] = v;
      sum += v;
    }
    const double target = uniform(cal.rebound_column_sum);
    for (int t = j + 1; t <= last; ++t) {
      double& v = inst.rebound[static_cast<std::size_t>(t * T + j)];
      v = sum > 0.0 ? v * target / sum : 0.0;
    }
  }

  for (std::size_t t = 0; t < n; ++t) {
    inst.q.push_back(uniform(cal.q));
    inst.r.push_back(uniform(cal.r));
  }
  inst.validate();
  return inst;
}

MarketInstance with_prices(MarketInstance inst, const std::vector<double>& prices, const std::string& scenario) {
  if (prices.size() != static_cast<std::size_t>(inst.T)) throw ShapeError("price profile length differs from T");
  inst.prices = prices;
  inst.scenario = scenario;
  inst.validate();
  return inst;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError("non-numeric " + what + " '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) throw ValidationError("non-numeric " + what + " '" + s + "'");
  return v;
}

}  // namespace

std::map<std::string, std::vector<double>> ingest_prices(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "scenario,hour,price_dkk_per_mwh") {
    throw ValidationError("price CSV must start with header scenario,hour,price_dkk_per_mwh");
  }
  std::map<std::string, std::map<int, double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (cells.size() != 3) throw ValidationError("line " + std::to_string(lineno) + ": expected 3 fields");
    const double hour = parse_number(cells[1], "hour");
    if (hour != std::floor(hour) || hour < 1.0) {
      throw ValidationError("line " + std::to_string(lineno) + ": hour must be a positive integer");
    }
    const double price = parse_number(cells[2], "price");
    auto& profile = rows[cells[0]];
    if (!profile.emplace(static_cast<int>(hour), price).second) {
      throw ValidationError("duplicate row for scenario '" + cells[0] + "' hour " + cells[1]);
    }
  }
  if (rows.empty()) throw ValidationError("price CSV has no data rows");
  std::map<std::string, std::vector<double>> out;
  for (const auto& [id, profile] : rows) {
    const int T = profile.rbegin()->first;
    std::vector<double> prices;
    for (int h = 1; h <= T; ++h) {
      const auto it = profile.find(h);
      if (it == profile.end()) {
        throw ValidationError("scenario '" + id + "' is missing hour " + std::to_string(h));
      }
      prices.push_back(it->second);
    }
    out.emplace(id, std::move(prices));
  }
  return out;
}

nlohmann::json to_json(const MarketInstance& inst) {
  nlohmann::json rebound = nlohmann::json::array();
  for (int t = 0; t < inst.T; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < inst.T; ++j) row.push_back(inst.a(t, j));
    rebound.push_back(row);
  }
  return nlohmann::json{{"format", "market-instance"},
                        {"version", 1},
                        {"T", inst.T},
                        {"category", to_string(inst.category)},
                        {"scenario", inst.scenario},
                        {"seed", inst.seed},
                        {"prices", inst.prices},
                        {"xbar", inst.xbar},
                        {"q", inst.q},
                        {"r", inst.r},
                        {"rebound", rebound}};
}

MarketInstance instance_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "market-instance") throw ValidationError("not a market-instance document");
    if (doc.at("version").get<int>() != 1) throw ValidationError("unsupported market-instance version");
    MarketInstance inst;
    inst.T = doc.at("T").get<int>();
    inst.category = parse_category(doc.at("category").get<std::string>());
    inst.scenario = doc.at("scenario").get<std::string>();
    inst.seed = doc.at("seed").get<std::uint64_t>();
    inst.prices = doc.at("prices").get<std::vector<double>>();
    inst.xbar = doc.at("xbar").get<std::vector<double>>();
    inst.q = doc.at("q").get<std::vector<double>>();
    inst.r = doc.at("r").get<std::vector<double>>();
    for (const auto& row : doc.at("rebound")) {
      const auto v = row.get<std::vector<double>>();
      if (v.size() != static_cast<std::size_t>(inst.T)) throw ShapeError("rebound row length differs from T");
      inst.rebound.insert(inst.rebound.end(), v.begin(), v.end());
    }
    inst.validate();
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed market instance: ") + e.what());
  }
}

void save_instance(const MarketInstance& inst, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << to_json(inst).dump(2) << '\n';
  if (!f) throw IoError("failed writing " + path.string());
}

MarketInstance load_instance(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  nlohmann::json doc;
  try {
    f >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return instance_from_json(doc);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::CvxdLP: return "cvxd-lp";
    case Method::PCAR: return "pcar";
    case Method::PCTAR: return "pctar";
    case Method::BigM: return "bigm";
    case Method::Hybrid: return "hybrid";
    case Method::PWL: return "pwl";
  }
  return "cvxd-lp";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::CvxdLP, Method::PCAR, Method::PCTAR, Method::BigM, Method::Hybrid, Method::PWL}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown method '" + s + "' (expected cvxd-lp, pcar, pctar, bigm, hybrid or pwl)");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string alpha_label(const std::vector<double>& alpha) {
  std::string s;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (i) s += ';';
    s += short_num(alpha[i]);
  }
  return s;
}

}  // namespace

std::string MethodSpec::label() const {
  switch (method) {
    case Method::PCAR: return "pcar[" + alpha_label(alpha) + "]";
    case Method::PCTAR: return "pctar[" + alpha_label(alpha) + "|" + short_num(lb) + "|" + short_num(ub) + "]";
    case Method::Hybrid: return "hybrid[" + std::to_string(k) + "]";
    case Method::PWL: return "pwl[" + std::to_string(pieces) + "]";
    default: return to_string(method);
  }
}

namespace {

// Neuron states of the network at x = 0, xt = xbar. Rebound rows hold because
// nothing is activated.
std::vector<double> no_bid_start(const MarketInstance& inst, const BiddingModel& bm, const nn::ReluNetwork& net) {
  std::vector<double> start(bm.model.num_variables(), std::numeric_limits<double>::quiet_NaN());
  for (int t = 0; t < inst.T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    start[bm.x[ut].index] = 0.0;
    start[bm.xt[ut].index] = inst.xbar[ut];
    const double z[] = {0.0, inst.xbar[ut], inst.q[ut], inst.r[ut]};
    const nn::ForwardResult fwd = nn::relu_forward(net, z);
    const std::string prefix = "n" + std::to_string(t + 1) + "_d";
    for (std::size_t l = 0; l < fwd.hidden.size(); ++l) {
      for (std::size_t j = 0; j < fwd.hidden[l].size(); ++j) {
        const std::string name = prefix + std::to_string(l + 1) + "_" + std::to_string(j);
        if (bm.model.contains(name)) start[bm.model.find(name).index] = fwd.hidden[l][j] > 0.0 ? 1.0 : 0.0;
      }
    }
  }
  return start;
}

}  // namespace

BiddingModel build_bidding_model(const MarketInstance& inst, const MethodSpec& spec, const nn::ReluNetwork* net) {
  inst.validate();
  if (!(spec.ratio_margin > 0.0 && spec.ratio_margin < 1.0)) throw ValidationError("ratio margin must lie in (0, 1)");
  if (spec.uses_network()) {
    if (!net) throw ValidationError("method " + to_string(spec.method) + " needs a network");
    if (net->input_size() != nn::kFeatures) throw ShapeError("surrogate network must take (x, xt, q, r)");
  }
  BiddingModel bm;
  opt::OptModel& m = bm.model;
  const int T = inst.T;
  for (int t = 0; t < T; ++t) {
    const std::string h = std::to_string(t + 1);
    const double cap = inst.xbar[static_cast<std::size_t>(t)];
    bm.x.push_back(m.add_variable("x" + h, 0.0, cap));
    bm.xt.push_back(m.add_variable("xt" + h, 0.0, cap));
    bm.lp.push_back(m.add_variable("lp" + h, 0.0, opt::kInf));
  }
  std::vector<Term> obj;
  for (int t = 0; t < T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const std::string h = std::to_string(t + 1);
    std::vector<Term> reb{{bm.xt[ut], 1.0}};
    for (int j = 0; j < t; ++j) {
      if (inst.a(t, j) != 0.0) reb.push_back({bm.x[static_cast<std::size_t>(j)], inst.a(t, j)});
    }
    m.add_constraint("rebound" + h, reb, RowSense::Equal, inst.xbar[ut]);
    m.add_constraint("avail" + h, {{bm.x[ut], 1.0}, {bm.xt[ut], -(1.0 - spec.ratio_margin)}}, RowSense::LessEqual, 0.0);
    obj.push_back({bm.x[ut], inst.prices[ut]});
    obj.push_back({bm.lp[ut], -1.0});
  }

  std::optional<embed::Penalty> alpha;
  if (spec.method == Method::PCAR || spec.method == Method::PCTAR) {
    std::vector<double> per_layer = spec.alpha;
    if (per_layer.size() == 1) per_layer.assign(net->hidden_layers(), spec.alpha[0]);
    alpha = embed::layer_penalty(*net, per_layer);
  }

  for (int t = 0; t < T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const std::string prefix = "n" + std::to_string(t + 1) + "_";
    if (spec.method == Method::PWL) {
      embed::PwlSpec pwl;
      pwl.pieces = spec.pieces;
      pwl.ratio_margin = spec.ratio_margin;
      pwl.xt_min = 0.0;
      pwl.xt_max = inst.xbar[ut];
      const double q = inst.q[ut], r = inst.r[ut];
      pwl.tabulate([q, r](double x, double xt) { return purchase_cost(x, xt, q, r); });
      bm.stats += embed::build_pwl(m, pwl, bm.x[ut], bm.xt[ut], bm.lp[ut], "p" + std::to_string(t + 1) + "_");
      continue;
    }
    embed::NetBinding at;
    at.inputs = {embed::NetInput::variable(bm.x[ut]), embed::NetInput::variable(bm.xt[ut]),
                 embed::NetInput::constant(inst.q[ut]), embed::NetInput::constant(inst.r[ut])};
    at.output = bm.lp[ut];
    at.prefix = prefix;
    at.output_at_least = true;
    const embed::Box box{{0.0, inst.xbar[ut]}, {0.0, inst.xbar[ut]}, {inst.q[ut], inst.q[ut]}, {inst.r[ut], inst.r[ut]}};
    switch (spec.method) {
      case Method::CvxdLP: bm.stats += embed::embed_cvxd(m, *net, at); break;
      case Method::BigM: bm.stats += embed::embed_bigm(m, *net, box, at); break;
      case Method::Hybrid: bm.stats += embed::embed_hybrid(m, *net, spec.k, box, at); break;
      case Method::PCAR: {
        auto pe = embed::embed_pcar(m, *net, *alpha, at);
        bm.stats += pe.stats;
        bm.penalty.insert(bm.penalty.end(), pe.penalty.begin(), pe.penalty.end());
        break;
      }
      case Method::PCTAR: {
        auto pe = embed::embed_pctar(m, *net, *alpha, spec.lb, spec.ub, at);
        bm.stats += pe.stats;
        bm.penalty.insert(bm.penalty.end(), pe.penalty.begin(), pe.penalty.end());
        break;
      }
      case Method::PWL: break;
    }
  }
  for (const Term& p : bm.penalty) obj.push_back({p.var, -p.coef});
  m.set_objective(opt::ObjSense::Maximize, obj);
  if (spec.method == Method::BigM || spec.method == Method::Hybrid) bm.start = no_bid_start(inst, bm, *net);
  return bm;
}

EvaluationReport evaluate_solution(const MarketInstance& inst, const BiddingModel& bm, const opt::SolveResult& result,
                                   const std::string& method, const nn::ReluNetwork* net) {
  if (!result.has_solution()) throw ValidationError("no primal solution to evaluate (" + std::string(opt::to_string(result.status)) + ")");
  EvaluationReport rep;
  rep.method = method;
  rep.scenario = inst.scenario;
  rep.status = result.status;
  rep.wall_time = result.wall_time;
  rep.gap = result.gap;
  rep.objective = result.objective;
  double sq = 0.0;
  double worst = 0.0;
  for (int t = 0; t < inst.T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    HourRow row;
    row.t = t + 1;
    row.x = std::max(0.0, result.value(bm.x[ut]));
    row.xt = std::max(0.0, result.value(bm.xt[ut]));
    row.lp_surrogate = result.value(bm.lp[ut]);
    const double q = inst.q[ut], r = inst.r[ut];
    if (row.x <= 1e-9) {
      row.lp_actual = 0.0;
    } else {
      double x = row.x;
      if (x >= row.xt) {
        x = 0.99 * row.xt;
        rep.warnings.push_back("hour " + std::to_string(t + 1) + ": x >= xtilde, cost evaluated at 0.99 xtilde");
      }
      row.lp_actual = x > 0.0 ? purchase_cost(x, row.xt, q, r) : 0.0;
    }
    if (net) {
      const std::vector<double> z{row.x, row.xt, q, r};
      row.lp_forward = std::max(nn::evaluate(*net, z), 0.0);
      worst = std::max(worst, std::abs(row.lp_surrogate - row.lp_forward) / (1.0 + std::abs(row.lp_forward)));
    } else {
      row.lp_forward = std::nan("");
    }
    rep.profit += inst.prices[ut] * row.x - row.lp_actual;
    sq += (row.lp_surrogate - row.lp_actual) * (row.lp_surrogate - row.lp_actual);
    rep.hours.push_back(row);
  }
  rep.rmse = std::sqrt(sq / inst.T);
  rep.max_forward_deviation = net ? worst : std::nan("");
  return rep;
}

void write_detail_rows(std::ostream& out, const EvaluationReport& rep) {
  for (const HourRow& h : rep.hours) {
    out << rep.method << ',' << rep.scenario << ',' << h.t << ',' << fmt(h.x) << ',' << fmt(h.xt) << ','
        << fmt(h.lp_surrogate) << ',' << fmt(h.lp_actual) << '\n';
  }
}

void write_summary_row(std::ostream& out, const EvaluationReport& rep) {
  out << rep.method << ',' << rep.scenario << ',' << fmt(rep.profit) << ',' << fmt(rep.rmse) << ','
      << fmt(rep.wall_time) << ',' << fmt(rep.gap) << ',' << opt::to_string(rep.status) << '\n';
}

}  // namespace reluopt::market
