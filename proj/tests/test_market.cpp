#include <doctest.h>

#include <cmath>
#include <sstream>

#include "reluopt/bb.hpp"
#include "reluopt/errors.hpp"
#include "reluopt/market.hpp"

using namespace reluopt;
using namespace reluopt::market;

namespace {

nn::ReluNetwork small_trained(nn::NetworkKind kind, std::vector<std::size_t> arch = {4, 10, 20, 10, 1}) {
  static const nn::Dataset data = nn::make_dataset(purchase_cost_target(), {}, 3000, nn::kDefaultMargin, 12);
  nn::ReluNetwork net = nn::ReluNetwork::random(std::move(arch), kind, 4);
  nn::TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 100;
  cfg.learning_rate = 1e-3;
  nn::fit(net, data, cfg);
  return net;
}

std::string price_csv(int scenarios, int T, int skip_hour = -1, bool duplicate = false) {
  std::ostringstream o;
  o << "scenario,hour,price_dkk_per_mwh\n";
  for (int s = 0; s < scenarios; ++s) {
    for (int h = T; h >= 1; --h) {
      if (h == skip_hour) continue;
      o << "sc" << s << ',' << h << ',' << (s + 1) * 0.5 * h << '\n';
    }
  }
  if (duplicate) o << "sc0,3,1.0\n";
  return o.str();
}

}  // namespace

TEST_CASE("responsiveness") {
  CHECK(responsiveness(4.0, 3.0, 1.5, 2.0) == 2.0);
  const double q = 2.5, r = 0.8;
  CHECK(std::abs(responsiveness(3.0, q, r, q / r + 50.0 / r) - 3.0) <= 1e-9);
  CHECK(responsiveness(0.0, q, r, 7.0) == 0.0);
}

TEST_CASE("incentive") {
  CHECK(incentive(1.5, 3.0, 4.0, 2.0) == 2.0);
  CHECK(incentive(0.75, 1.0, 2.0, 1.0) == doctest::Approx(2.0 + std::log(3.0)).epsilon(1e-14));
  CHECK(incentive(0.75, 1.0, 2.0, 1.0) == doctest::Approx(3.0986).epsilon(1e-4));
  CHECK_THROWS_AS(incentive(1.0, 1.0, 2.0, 1.0), DomainError);
  CHECK_THROWS_AS(incentive(0.0, 1.0, 2.0, 1.0), DomainError);
}

TEST_CASE("purchase cost") {
  CHECK(purchase_cost(1.0, 2.0, 3.0, 2.0) == 1.5);
  CHECK(purchase_cost(0.0, 2.0, 3.0, 2.0) == 0.0);
  CHECK(purchase_cost(0.75, 1.0, 2.0, 1.0) == doctest::Approx(0.75 * (2.0 + std::log(3.0))).epsilon(1e-14));
  CHECK(purchase_cost(0.75, 1.0, 2.0, 1.0) == doctest::Approx(2.3240).epsilon(1e-4));
  CHECK_THROWS_AS(purchase_cost(2.0, 2.0, 3.0, 2.0), DomainError);
  for (double xt : {0.5, 3.0, 9.0}) {
    for (double q : {1.0, 4.0, 8.0}) {
      CHECK(purchase_cost(xt / 2, xt, q, 1.25) == doctest::Approx(xt * q / (2 * 1.25)).epsilon(1e-15));
    }
  }
}

TEST_CASE("purchase cost is strictly increasing above the logistic floor") {
  for (double xt : {1.0, 5.0, 10.0}) {
    for (double q : {1.0, 4.5, 8.0}) {
      for (double r : {0.5, 2.0, 5.0}) {
        const double lo = xt / (1.0 + std::exp(q));
        double prev = purchase_cost(lo, xt, q, r);
        for (int i = 1; i < 1000; ++i) {
          const double v = purchase_cost(lo + (xt - lo) * i / 1000.0, xt, q, r);
          CHECK(v > prev);
          prev = v;
        }
      }
    }
  }
}

TEST_CASE("purchase cost dips below zero near the origin") {
  const double xt = 1.0, q = 1.0, r = 1.0;
  const double x = 1e-3;
  CHECK(purchase_cost(x, xt, q, r) < 0.0);
  CHECK(purchase_cost(2 * x, xt, q, r) < purchase_cost(x, xt, q, r));
}

TEST_CASE("responsiveness inverts the incentive") {
  double worst = 0.0;
  for (int a = 1; a < 10; ++a) {
    for (int b = 1; b <= 10; ++b) {
      const double xt = b;
      const double x = xt * a / 10.0;
      const double q = 1.0 + a * 0.7, r = 0.5 + b * 0.45;
      worst = std::max(worst, std::abs(responsiveness(xt, q, r, incentive(x, xt, q, r)) - x));
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("generated instances") {
  const MarketInstance a = generate_instance(Category::Low, 24, 5);
  const MarketInstance b = generate_instance(Category::Low, 24, 5);
  CHECK(to_json(a) == to_json(b));
  CHECK(to_json(a) != to_json(generate_instance(Category::Low, 24, 6)));
  double max_col = 0.0;
  for (int j = 0; j < 24; ++j) {
    double col = 0.0;
    for (int t = 0; t < 24; ++t) {
      if (t <= j) CHECK(a.a(t, j) == 0.0);
      col += a.a(t, j);
    }
    max_col = std::max(max_col, col);
  }
  CHECK(max_col <= 1.0);
  for (int t = 0; t < 24; ++t) {
    CHECK(a.xbar[t] > 0.0);
    CHECK(a.r[t] > 0.0);
  }
}

TEST_CASE("low-category prices are mostly below 10") {
  int below = 0, total = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    for (double p : generate_instance(Category::Low, 24, s).prices) {
      below += p < 10.0 ? 1 : 0;
      ++total;
    }
  }
  CHECK(static_cast<double>(below) / total >= 0.9);
  const double low = generate_instance(Category::Low, 24, 1).prices[0];
  const double high = generate_instance(Category::High, 24, 1).prices[0];
  CHECK(high == doctest::Approx(400.0 * low));
}

TEST_CASE("instance JSON round trip") {
  const MarketInstance a = generate_instance(Category::Medium, 6, 3);
  const MarketInstance b = instance_from_json(nlohmann::json::parse(to_json(a).dump()));
  CHECK(to_json(a) == to_json(b));
  auto bad = to_json(a);
  bad["rebound"][0][1] = 0.5;
  CHECK_THROWS_AS(instance_from_json(bad), ValidationError);
}

TEST_CASE("price ingestion") {
  const auto ok = ingest_prices(price_csv(2, 24));
  REQUIRE(ok.size() == 2);
  CHECK(ok.at("sc0").size() == 24);
  CHECK(ok.at("sc1")[0] == 1.0);
  CHECK(ok.at("sc1")[23] == 24.0);
  try {
    ingest_prices(price_csv(1, 24, 13));
    FAIL("missing hour accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("sc0") != std::string::npos);
    CHECK(std::string(e.what()).find("hour 13") != std::string::npos);
  }
  CHECK_THROWS_AS(ingest_prices(price_csv(1, 24, -1, true)), ValidationError);
  CHECK_THROWS_AS(ingest_prices("scenario,hour,price_dkk_per_mwh\na,1,abc\n"), ValidationError);
  CHECK_THROWS_AS(ingest_prices("hour,price\n1,2\n"), ValidationError);
}

TEST_CASE("bidding model counts") {
  const MarketInstance inst = generate_instance(Category::Low, 24, 1);
  const nn::ReluNetwork cvx = nn::ReluNetwork::random({4, 10, 20, 10, 1}, nn::Convexified{1}, 1);
  const BiddingModel lp = build_bidding_model(inst, MethodSpec{Method::CvxdLP}, &cvx);
  CHECK(lp.model.num_variables() == 1032);
  CHECK(lp.model.num_binaries() == 0);
  MethodSpec bigm;
  bigm.method = Method::BigM;
  const BiddingModel mip = build_bidding_model(inst, bigm, &cvx);
  CHECK(mip.model.num_binaries() <= 960);
  MethodSpec pwl;
  pwl.method = Method::PWL;
  CHECK(build_bidding_model(inst, pwl, nullptr).model.num_binaries() == 24 * 16);
}

TEST_CASE("method and network kind must agree") {
  const MarketInstance inst = generate_instance(Category::Low, 4, 1);
  const nn::ReluNetwork uc = nn::ReluNetwork::random({4, 5, 1}, nn::Unconstrained{}, 1);
  CHECK_THROWS_AS(build_bidding_model(inst, MethodSpec{Method::CvxdLP}, &uc), KindMismatchError);
  MethodSpec hyb;
  hyb.method = Method::Hybrid;
  hyb.k = 1;
  CHECK_THROWS_AS(build_bidding_model(inst, hyb, &uc), KindMismatchError);
  CHECK_THROWS_AS(build_bidding_model(inst, MethodSpec{Method::BigM}, nullptr), ValidationError);
  CHECK(parse_method("pctar") == Method::PCTAR);
  CHECK_THROWS_AS(parse_method("gurobi"), ValidationError);
}

TEST_CASE("zero market prices make bidding unprofitable") {
  Calibration cal;
  cal.q = {5.0, 8.0};
  MarketInstance inst = generate_instance(Category::Low, 3, 2, cal);
  inst.prices.assign(3, 0.0);
  MethodSpec pwl;
  pwl.method = Method::PWL;
  const BiddingModel bm = build_bidding_model(inst, pwl, nullptr);
  mip::BBOptions o;
  o.gap = 0.0;
  const opt::SolveResult r = mip::solve_mip(bm.model, o);
  REQUIRE(r.status == opt::SolveStatus::Optimal);
  CHECK(r.objective == doctest::Approx(0.0));
  const EvaluationReport rep = evaluate_solution(inst, bm, r, "pwl", nullptr);
  for (const HourRow& h : rep.hours) CHECK(h.x == doctest::Approx(0.0));
  CHECK(rep.profit == doctest::Approx(0.0));
}

TEST_CASE("evaluation of a hand-made solution") {
  MarketInstance inst;
  inst.T = 1;
  inst.prices = {5.0};
  inst.xbar = {2.0};
  inst.q = {3.0};
  inst.r = {2.0};
  inst.rebound = {0.0};
  inst.scenario = "hand";
  MethodSpec pwl;
  pwl.method = Method::PWL;
  const BiddingModel bm = build_bidding_model(inst, pwl, nullptr);
  opt::SolveResult r;
  r.status = opt::SolveStatus::Optimal;
  r.primal.assign(bm.model.num_variables(), 0.0);
  r.primal[bm.x[0].index] = 1.0;
  r.primal[bm.xt[0].index] = 2.0;
  r.primal[bm.lp[0].index] = 1.2;
  const EvaluationReport rep = evaluate_solution(inst, bm, r, "pwl", nullptr);
  CHECK(rep.profit == doctest::Approx(3.5).epsilon(1e-14));
  CHECK(rep.rmse == doctest::Approx(0.3).epsilon(1e-14));

  r.primal[bm.x[0].index] = 0.0;
  const EvaluationReport zero = evaluate_solution(inst, bm, r, "pwl", nullptr);
  CHECK(zero.profit == 0.0);
  CHECK(zero.rmse == doctest::Approx(1.2));

  r.primal[bm.x[0].index] = 1.0;
  r.primal[bm.lp[0].index] = 1.5;
  CHECK(evaluate_solution(inst, bm, r, "pwl", nullptr).rmse == doctest::Approx(0.0).epsilon(1e-15));

  std::ostringstream d, s;
  write_detail_rows(d, rep);
  write_summary_row(s, rep);
  CHECK(d.str() == "pwl,hand,1,1,2,1.2,1.5\n");
  CHECK(s.str().rfind("pwl,hand,3.5,", 0) == 0);
  CHECK(s.str().find(",Optimal\n") != std::string::npos);

  opt::SolveResult none;
  CHECK_THROWS_AS(evaluate_solution(inst, bm, none, "pwl", nullptr), ValidationError);
}

TEST_CASE("solved bidding models respect the rebound and objective identities") {
  const MarketInstance inst = generate_instance(Category::Medium, 8, 4);
  const nn::ReluNetwork cvx = small_trained(nn::Convexified{1});
  const nn::ReluNetwork uc = small_trained(nn::Unconstrained{});
  MethodSpec pcar;
  pcar.method = Method::PCAR;
  pcar.alpha = {0.5};
  for (const auto& [spec, net] : std::vector<std::pair<MethodSpec, const nn::ReluNetwork*>>{
           {MethodSpec{Method::CvxdLP}, &cvx}, {pcar, &uc}}) {
    const BiddingModel bm = build_bidding_model(inst, spec, net);
    const opt::SolveResult r = mip::solve_mip(bm.model);
    REQUIRE(r.status == opt::SolveStatus::Optimal);
    double expect = 0.0;
    for (int t = 0; t < inst.T; ++t) {
      CHECK(r.value(bm.xt[t]) <= inst.xbar[t] + 1e-7);
      expect += inst.prices[t] * r.value(bm.x[t]) - r.value(bm.lp[t]);
    }
    expect -= opt::evaluate_terms(bm.penalty, r.primal);
    CHECK(std::abs(r.objective - expect) <= 1e-7 * (1.0 + std::abs(expect)));
  }
}

TEST_CASE("convexified LP is tight at its solution") {
  const nn::ReluNetwork cvx = small_trained(nn::Convexified{1});
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const MarketInstance inst = generate_instance(Category::Low, 24, s);
    const BiddingModel bm = build_bidding_model(inst, MethodSpec{Method::CvxdLP}, &cvx);
    const opt::SolveResult r = mip::solve_mip(bm.model);
    REQUIRE(r.status == opt::SolveStatus::Optimal);
    const EvaluationReport rep = evaluate_solution(inst, bm, r, "cvxd-lp", &cvx);
    CHECK(rep.max_forward_deviation <= 1e-6);
  }
}

TEST_CASE("the no-bid start gives Big-M an incumbent at the first node") {
  const nn::ReluNetwork uc = small_trained(nn::Unconstrained{});
  const MarketInstance inst = generate_instance(Category::Medium, 6, 9);
  const BiddingModel bm = build_bidding_model(inst, MethodSpec{Method::BigM}, &uc);
  REQUIRE(bm.start.size() == bm.model.num_variables());
  mip::BBOptions o;
  o.node_limit = 1;
  o.heuristic_every = 1000000;
  o.start = bm.start;
  const opt::SolveResult r = mip::solve_mip(bm.model, o);
  REQUIRE(r.has_solution());
  CHECK(opt::max_violation(bm.model, r.primal) <= 1e-6);
}
