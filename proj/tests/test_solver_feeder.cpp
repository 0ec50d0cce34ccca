#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dispatch/socp_builder.hpp"
#include "dispatch/solver.hpp"

using namespace dispatch;

namespace {

ConicProblem ieee13(int T) {
  const Feeder f = load_feeder(std::string(DISPATCH_DATA_DIR) + "/ieee13.feeder");
  SyntheticProfile p;
  p.steps = T;
  return build(f, synthetic_forecast(f, p), BuilderConfig{});
}

}  // namespace

TEST_CASE("IEEE-13 loss minimization, T=5, agrees with an independent conic solve") {
  const ConicProblem prob = ieee13(5);
  const auto r = conic::solve(prob.program);
  REQUIRE(r.status == conic::SolveStatus::Optimal);
  // Same dump solved by cvxpy + Clarabel (tools/crosscheck_dump.py).
  const double reference = 9.756874189407e-01;
  CHECK(std::abs(r.objective - reference) / reference <= 1e-6);
  const auto rep = conic::certify(prob.program, r);
  CHECK(rep.pass);
  CHECK(rep.rel_gap <= 1e-8);
  CHECK(rep.primal_eq <= 1e-8);
  CHECK(rep.primal_cone <= 1e-8);
  CHECK(rep.dual <= 1e-8);
  CHECK(r.dual_objective <= r.objective + 1e-8);
}

TEST_CASE("objective scaling leaves the minimizer and scales the duals") {
  const Feeder f = load_feeder(std::string(DISPATCH_DATA_DIR) + "/two_node.feeder");
  SyntheticProfile p;
  p.steps = 3;
  const ConicProblem prob = build(f, synthetic_forecast(f, p), BuilderConfig{});
  const auto r1 = conic::solve(prob.program);
  conic::ConeProgram scaled = prob.program;
  scaled.c *= 4.0;
  const auto r4 = conic::solve(scaled);
  REQUIRE(r1.status == conic::SolveStatus::Optimal);
  REQUIRE(r4.status == conic::SolveStatus::Optimal);
  CHECK((r1.x - r4.x).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((4.0 * r1.y - r4.y).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, r4.y.cwiseAbs().maxCoeff()));
  CHECK((4.0 * r1.z - r4.z).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, r4.z.cwiseAbs().maxCoeff()));
  CHECK(r4.objective == doctest::Approx(4.0 * r1.objective).epsilon(1e-8));
}

TEST_CASE("repeat solves are identical") {
  const ConicProblem prob = ieee13(3);
  const auto a = conic::solve(prob.program);
  const auto b = conic::solve(prob.program);
  CHECK(a.iterations == b.iterations);
  CHECK(std::abs(a.objective - b.objective) <= 1e-12);
  CHECK(a.x == b.x);
}
