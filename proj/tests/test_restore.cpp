#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dispatch/restore.hpp"
#include "dispatch/scd.hpp"

using namespace dispatch;

namespace {

const std::string kData = DISPATCH_DATA_DIR;

ForecastSeries profile(const Feeder& f, int T) {
  SyntheticProfile p;
  p.steps = T;
  return synthetic_forecast(f, p);
}

// Two buses, inverter large enough for an interior reactive optimum.
const char* kWideInverter = R"(
[nodes]
src a 0.90 1.10 slack
bus a 0.90 1.10
[branches]
src bus a 1.0 1 pu | 0.01+0.02j 0 0 ; 0 0 0 ; 0 0 0
[loads]
bus a 0.1 0.05 pu
[batteries]
bus a 0.0 0.05 0.05 0.2 0.95 0.95 0.04 0.9
)";

}  // namespace

TEST_CASE("feeder without controllable devices reduces to one sweep") {
  const Feeder f = parse_feeder(R"(
[nodes]
src a 0.90 1.10 slack
bus a 0.90 1.10
[branches]
src bus a 1.0 1 pu | 0.01+0.02j 0 0 ; 0 0 0 ; 0 0 0
[loads]
bus a 0.1 0.05 pu
)");
  const ForecastSeries fc = profile(f, 2);
  const RelaxedSolve r = solve_relaxation(f, fc, BuilderConfig{});
  const PeriodResult p = restore_timestep(f, fc, r.schedule, 1);
  const PowerFlowResult pf = sweep(f, schedule_injections(f, fc, r.schedule, 1));
  CHECK(p.iterations == 0);
  CHECK(p.feasible);
  CHECK(std::abs(p.loss - pf.diag_loss) <= 1e-12);
  CHECK(p.p_bat.size() == 0);
}

TEST_CASE("reactive set-point agrees with a grid search on the exact flow") {
  const Feeder f = parse_feeder(kWideInverter);
  const ForecastSeries fc = profile(f, 1);
  const RelaxedSolve r = solve_relaxation(f, fc, BuilderConfig{});
  RestoreConfig cfg;
  cfg.improve_tol = 1e-16;
  const PeriodResult p = restore_timestep(f, fc, r.schedule, 0, cfg);
  REQUIRE(p.feasible);

  DispatchSchedule probe = r.schedule;
  const double pmax = p.p_bat[0];
  const double qmax = std::sqrt(0.2 * 0.2 - pmax * pmax);
  double best_q = 0.0, best_loss = 1e9;
  for (int k = 0; k <= 20000; ++k) {
    const double q = -qmax + 2.0 * qmax * k / 20000.0;
    probe.q_bat(0, 0) = q;
    const double loss = sweep(f, schedule_injections(f, fc, probe, 0)).diag_loss;
    if (loss < best_loss) {
      best_loss = loss;
      best_q = q;
    }
  }
  CHECK(std::abs(p.q_bat[0] - best_q) <= 1e-4);
  CHECK(p.loss <= best_loss + 1e-12);
  CHECK(p.p_bat[0] == r.schedule.p_dis(0, 0) - r.schedule.p_ch(0, 0));
}

TEST_CASE("gap arithmetic") {
  const GapReport g = gap(10.0, 10.2);
  CHECK(g.gap_pct == doctest::Approx(100.0 * 0.2 / 10.2).epsilon(1e-12));
  CHECK(g.gap_pct == doctest::Approx(1.9608).epsilon(1e-4));
  CHECK(gap(1.0, 1.0).gap_pct == 0.0);
  CHECK_NOTHROW(gap(1.0, 1.0 - 1e-9));
  try {
    gap(1.0, 0.9);
    FAIL("ordering violation not raised");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OrderingViolated);
  }
  CHECK_THROWS_AS(gap(0.0, 0.0), Error);
}

TEST_CASE("thread count does not change results") {
  const Feeder f = load_feeder(kData + "/ieee13_der.feeder");
  const ForecastSeries fc = profile(f, 5);
  const RelaxedSolve r = solve_relaxation(f, fc, BuilderConfig{});
  const RestoreResult serial = restore_horizon(f, fc, r.schedule, {}, 1);
  const RestoreResult par = restore_horizon(f, fc, r.schedule, {}, 3);
  REQUIRE(serial.periods.size() == 5);
  CHECK(serial.dnlp_opt == par.dnlp_opt);
  for (int t = 0; t < 5; ++t) {
    CHECK(serial.periods[t].q_bat == par.periods[t].q_bat);
    CHECK(serial.periods[t].p_sol == par.periods[t].p_sol);
    CHECK(serial.periods[t].q_sol == par.periods[t].q_sol);
    CHECK(serial.periods[t].flow.voltage == par.periods[t].flow.voltage);
  }
  const PeriodResult single = restore_timestep(f, fc, r.schedule, 3);
  CHECK(single.loss == serial.periods[3].loss);
}

TEST_CASE("restored loss never undercuts the relaxation period by period") {
  const Feeder f = load_feeder(kData + "/ieee13_der.feeder");
  const ForecastSeries fc = scale_case(profile(f, 3), LoadCase::LH);
  const RelaxedSolve r = solve_relaxation(f, fc, BuilderConfig{});
  const RestoreResult rr = restore_horizon(f, fc, r.schedule);
  CHECK(rr.all_feasible);
  for (int t = 0; t < 3; ++t) {
    CHECK(rr.periods[t].loss >= r.schedule.loss[t] - 1e-8);
    CHECK(rr.periods[t].objective <= rr.periods[t].init_objective);
    CHECK(rr.periods[t].flow.max_mismatch <= 1e-9);
  }
  const GapReport g = gap(r.base_objective, rr.dnlp_opt);
  CHECK(g.gap_pct >= 0.0);

  const DispatchSchedule s = restored_schedule(r.schedule, rr);
  for (int t = 0; t < 3; ++t) CHECK(validate_schedule(f, fc, s, t).worst <= 1e-6);
}

TEST_CASE("solar active power can be held at the relaxed value") {
  const Feeder f = load_feeder(kData + "/ieee13_der.feeder");
  const ForecastSeries fc = profile(f, 1);
  const RelaxedSolve r = solve_relaxation(f, fc, BuilderConfig{});
  RestoreConfig cfg;
  cfg.solar_active = false;
  const PeriodResult p = restore_timestep(f, fc, r.schedule, 0, cfg);
  CHECK(p.p_sol == r.schedule.p_sol.col(0));
}

TEST_CASE("configuration errors") {
  RestoreConfig cfg;
  cfg.fd_step = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = RestoreConfig{};
  cfg.penalty = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
