#include <doctest.h>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "reluopt/errors.hpp"
#include "reluopt/simplex.hpp"
#include "oracles.hpp"

using namespace reluopt;
using namespace reluopt::opt;

using namespace oracle;

TEST_CASE("single variable bounded by a row") {
  OptModel m;
  const VarId x = m.add_variable("x", 0.0, kInf);
  m.add_constraint("c", {{x, 1.0}}, RowSense::LessEqual, 3.0);
  m.set_objective(ObjSense::Minimize, {{x, -1.0}});
  const SolveResult r = lp::solve_lp(m);
  CHECK(r.status == SolveStatus::Optimal);
  CHECK(r.value(x) == doctest::Approx(3.0));
  CHECK(r.objective == doctest::Approx(-3.0));
  CHECK(r.best_bound == r.objective);
}

TEST_CASE("degenerate face has a unique objective") {
  OptModel m;
  const VarId x = m.add_variable("x", 0.0, kInf);
  const VarId y = m.add_variable("y", 0.0, kInf);
  m.add_constraint("c", {{x, 1.0}, {y, 1.0}}, RowSense::LessEqual, 1.0);
  m.set_objective(ObjSense::Minimize, {{x, -1.0}, {y, -1.0}});
  const SolveResult r = lp::solve_lp(m);
  CHECK(r.status == SolveStatus::Optimal);
  CHECK(r.objective == doctest::Approx(-1.0));
}

TEST_CASE("maximize restores the objective sign") {
  OptModel m;
  const VarId x = m.add_variable("x", 0.0, 4.0);
  m.set_objective(ObjSense::Maximize, {{x, 2.0}}, 1.0);
  const SolveResult r = lp::solve_lp(m);
  CHECK(r.status == SolveStatus::Optimal);
  CHECK(r.objective == doctest::Approx(9.0));
}

TEST_CASE("unbounded and infeasible are detected") {
  OptModel u;
  const VarId x = u.add_variable("x", 0.0, kInf);
  const VarId y = u.add_variable("y", -kInf, kInf);
  u.add_constraint("c", {{x, 1.0}, {y, -1.0}}, RowSense::LessEqual, 2.0);
  u.set_objective(ObjSense::Minimize, {{y, -1.0}});
  const SolveResult ru = lp::solve_lp(u);
  CHECK(ru.status == SolveStatus::Unbounded);
  REQUIRE(ru.certificate.size() == 2);
  CHECK(ru.certificate[1] > 0.0);

  OptModel inf;
  const VarId z = inf.add_variable("z", 0.0, 1.0);
  inf.add_constraint("c", {{z, 1.0}}, RowSense::GreaterEqual, 2.0);
  CHECK(lp::solve_lp(inf).status == SolveStatus::Infeasible);

  OptModel empty;
  empty.add_variable("w", 0.0, 1.0);
  empty.add_constraint("e", {}, RowSense::LessEqual, -1.0);
  CHECK(lp::solve_lp(empty).status == SolveStatus::Infeasible);
}

TEST_CASE("equality rows and free variables") {
  OptModel m;
  const VarId x = m.add_variable("x", -kInf, kInf);
  const VarId y = m.add_variable("y", -kInf, kInf);
  m.add_constraint("e1", {{x, 1.0}, {y, 1.0}}, RowSense::Equal, 4.0);
  m.add_constraint("e2", {{x, 1.0}, {y, -1.0}}, RowSense::Equal, 2.0);
  m.set_objective(ObjSense::Minimize, {{x, 1.0}});
  const SolveResult r = lp::solve_lp(m);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.value(x) == doctest::Approx(3.0));
  CHECK(r.value(y) == doctest::Approx(1.0));
}

TEST_CASE("binary variables are rejected") {
  OptModel m;
  m.add_variable("d", 0.0, 1.0, VarKind::Binary);
  CHECK_THROWS_AS(lp::solve_lp(m), ValidationError);
}

TEST_CASE("random LPs match vertex enumeration") {
  std::mt19937_64 rng(2024);
  int feasible = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const DenseLp lp = random_lp(rng);
    const OptModel model = to_model(lp, trial % 2 == 1);
    const SolveResult r = lp::solve_lp(model);
    const auto expect = vertex_oracle(lp);
    CAPTURE(trial);
    if (!expect) {
      CHECK(r.status == SolveStatus::Infeasible);
      continue;
    }
    ++feasible;
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(std::abs(r.objective - *expect) <= 1e-7 * (1.0 + std::abs(*expect)));
    CHECK(max_violation(model, r.primal) <= 1e-7);
  }
  CHECK(feasible > 30);
}

TEST_CASE("serial and parallel kernels give identical solves") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const OptModel model = to_model(random_lp(rng), false);
    lp::SimplexOptions a, b;
    a.parallel_kernels = false;
    b.parallel_kernels = true;
    const SolveResult ra = lp::solve_lp(model, a);
    const SolveResult rb = lp::solve_lp(model, b);
    CHECK(ra.status == rb.status);
    CHECK(ra.simplex_iterations == rb.simplex_iterations);
    CHECK(ra.primal == rb.primal);
  }
}

TEST_CASE("scaling the objective scales the optimum") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseLp lp = random_lp(rng);
    DenseLp scaled = lp;
    for (double& c : scaled.c) c *= 8.0;
    const SolveResult r1 = lp::solve_lp(to_model(lp, false));
    const SolveResult r2 = lp::solve_lp(to_model(scaled, false));
    REQUIRE(r1.status == r2.status);
    if (r1.status == SolveStatus::Optimal) {
      CHECK(r2.objective == doctest::Approx(8.0 * r1.objective).epsilon(1e-9));
    }
  }
}

TEST_CASE("warm start after a bound change agrees with a cold solve") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    DenseLp lp = random_lp(rng);
    OptModel model = to_model(lp, false);
    lp::SimplexEngine engine(model);
    engine.solve({});
    const std::size_t j = trial % lp.n;
    const double mid = 0.5 * (lp.lo[j] + lp.hi[j]);
    engine.set_bounds(j, mid, lp.hi[j]);
    const lp::LpStatus warm = engine.solve({});
    model.set_bounds(VarId{static_cast<std::uint32_t>(j)}, mid, lp.hi[j]);
    const SolveResult cold = lp::solve_lp(model);
    CAPTURE(trial);
    if (cold.status == SolveStatus::Optimal) {
      REQUIRE(warm == lp::LpStatus::Optimal);
      CHECK(engine.objective() == doctest::Approx(cold.objective).epsilon(1e-9));
    } else {
      CHECK(warm == lp::LpStatus::Infeasible);
    }
  }
}

TEST_CASE("identical solves are deterministic") {
  std::mt19937_64 rng(3);
  const OptModel model = to_model(random_lp(rng), true);
  const SolveResult a = lp::solve_lp(model);
  const SolveResult b = lp::solve_lp(model);
  CHECK(a.simplex_iterations == b.simplex_iterations);
  CHECK(a.primal == b.primal);
}
