#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dispatch/scd.hpp"

using namespace dispatch;

namespace {

const std::string kData = DISPATCH_DATA_DIR;

ForecastSeries profile(const Feeder& f, int T, unsigned seed = 1) {
  SyntheticProfile p;
  p.steps = T;
  p.seed = seed;
  return synthetic_forecast(f, p);
}

DispatchSchedule one_battery(std::initializer_list<double> pd, std::initializer_list<double> pc) {
  DispatchSchedule s;
  s.batteries = {Slot{1, 0}};
  const int T = static_cast<int>(pd.size());
  s.p_dis.resize(1, T);
  s.p_ch.resize(1, T);
  int t = 0;
  for (double v : pd) s.p_dis(0, t++) = v;
  t = 0;
  for (double v : pc) s.p_ch(0, t++) = v;
  return s;
}

DualBundle bounds(std::initializer_list<double> up, std::initializer_list<double> low) {
  DualBundle d;
  const int T = static_cast<int>(up.size());
  d.beta_up.resize(1, T);
  d.beta_low.resize(1, T);
  d.lambda_p = Eigen::MatrixXd::Zero(1, T);
  int t = 0;
  for (double v : up) d.beta_up(0, t++) = v;
  t = 0;
  for (double v : low) d.beta_low(0, t++) = v;
  return d;
}

BuilderConfig soc_track() {
  BuilderConfig cfg;
  cfg.alpha = 0.0;
  cfg.objective.kind = ObjectiveKind::SoCTrack;
  cfg.objective.b_target = 0.0;  // draining faster than p_max allows rewards burning energy
  return cfg;
}

}  // namespace

TEST_CASE("product matrix and flags") {
  const SCDReport r = detect_scd(one_battery({0.2, 0.0, 1e-4, 0.5}, {0.1, 0.3, 1e-3, 0.0}));
  CHECK(r.product(0, 0) == doctest::Approx(0.02));
  CHECK(r.product(0, 1) == 0.0);
  CHECK(r.product(0, 2) == doctest::Approx(1e-7));
  CHECK(r.flagged(0, 0));
  CHECK_FALSE(r.flagged(0, 1));
  CHECK_FALSE(r.flagged(0, 2));
  CHECK(r.num_flagged() == 1);
  CHECK(r.total == doctest::Approx(0.0200001));
  CHECK_FALSE(r.clean);
  CHECK(detect_scd(one_battery({0.2, 0.0}, {0.0, 0.3})).clean);
  CHECK_FALSE(detect_scd(one_battery({1e-4}, {1e-3}), 1e-8).clean);
}

TEST_CASE("gamma is the suffix sum of the bound multipliers") {
  const Eigen::MatrixXd g = gamma(bounds({0.0, 0.5, 0.0, 1.0}, {0.25, 0.0, 0.0, 0.0}));
  CHECK(g(0, 3) == 1.0);
  CHECK(g(0, 2) == 1.0);
  CHECK(g(0, 1) == 1.5);
  CHECK(g(0, 0) == 1.25);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DualBundle d = bounds({0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0});
  for (int t = 0; t < 6; ++t) {
    d.beta_up(0, t) = u(rng);
    d.beta_low(0, t) = u(rng);
  }
  const Eigen::MatrixXd r = gamma(d);
  for (int t = 0; t + 1 < 6; ++t) CHECK(r(0, t) - r(0, t + 1) == doctest::Approx(d.beta_up(0, t) - d.beta_low(0, t)));
}

TEST_CASE("certificate conditions on hand-built multipliers") {
  BuilderConfig cfg;
  cfg.alpha = 0.01;
  const DualBundle zero = bounds({0, 0, 0}, {0, 0, 0});
  const CertificateReport ok = check_certificates(cfg, zero, 1.0 / 60.0);
  CHECK(ok.c1);
  CHECK(ok.c2);
  CHECK(ok.c3_all);
  CHECK(ok.theorem());
  CHECK(ok.a1);

  cfg.alpha = 0.0;
  CHECK_FALSE(check_certificates(cfg, zero, 1.0 / 60.0).c2);

  // margin alpha - gamma * dt goes negative with a large upper-bound multiplier
  cfg.alpha = 0.01;
  const CertificateReport big = check_certificates(cfg, bounds({0, 0, 1.0}, {0, 0, 0}), 1.0);
  CHECK_FALSE(big.c3_all);
  CHECK(big.c3_margin(0, 2) == doctest::Approx(-0.99));
  CHECK(big.c3_literal_all);

  // negative gamma is harmless for the margin but breaks the literal form
  const CertificateReport low = check_certificates(cfg, bounds({0, 0, 0}, {0, 0, 1.0}), 1.0 / 60.0);
  CHECK(low.c3_all);
  CHECK_FALSE(low.c3_literal_all);

  cfg.objective.kind = ObjectiveKind::SoCTrack;
  cfg.objective.b_target = 0.1;
  CHECK_FALSE(check_certificates(cfg, zero, 1.0 / 60.0).c1);
}

TEST_CASE("loss minimisation with a small penalty certifies and stays exact") {
  const Feeder f = load_feeder(kData + "/two_node.feeder");
  BuilderConfig cfg;
  cfg.alpha = 0.01;
  const RelaxedSolve r = solve_relaxation(f, profile(f, 4), cfg);
  const CertificateReport c = check_certificates(cfg, extract_duals(r.problem, r.result.y, r.result.z), 1.0 / 60.0);
  CHECK(c.theorem());
  CHECK(c.corollary());
  CHECK(detect_scd(r.schedule).clean);
}

TEST_CASE("terminal tracking drives simultaneous operation and two-step removes it") {
  const Feeder f = load_feeder(kData + "/two_node.feeder");
  const BuilderConfig cfg = soc_track();
  const ForecastSeries fc = profile(f, 3);
  const RelaxedSolve r = solve_relaxation(f, fc, cfg);
  const SCDReport scd = detect_scd(r.schedule);
  CHECK_FALSE(scd.clean);
  CHECK(scd.num_flagged() >= 1);
  const CertificateReport c = check_certificates(cfg, extract_duals(r.problem, r.result.y, r.result.z), fc.dt_hours);
  CHECK_FALSE(c.theorem());

  const RelaxedSolve fixed = two_step_enforce(f, fc, cfg, r.schedule);
  CHECK(detect_scd(fixed.schedule).clean);
  const Eigen::MatrixXd net1 = r.schedule.p_dis - r.schedule.p_ch;
  const Eigen::MatrixXd net2 = fixed.schedule.p_dis - fixed.schedule.p_ch;
  for (int t = 0; t < 3; ++t) {
    if (net1(0, t) >= 0.0)
      CHECK(std::abs(fixed.schedule.p_ch(0, t)) <= 1e-9);
    else
      CHECK(std::abs(fixed.schedule.p_dis(0, t)) <= 1e-9);
  }
  // pinning can only raise the objective
  CHECK(fixed.result.objective >= r.result.objective - 1e-9);
  CHECK(net2.allFinite());
}

TEST_CASE("exhaustive pattern search") {
  const Feeder f = load_feeder(kData + "/two_node.feeder");
  BuilderConfig cfg;
  cfg.b_init = Eigen::VectorXd::Constant(1, 0.0005);
  const ForecastSeries fc = profile(f, 2);
  const MiOracleResult mi = mi_oracle(f, fc, cfg);
  CHECK(mi.patterns == 4);
  CHECK(mi.feasible >= 1);
  CHECK(mi.modes.size() == 2);
  CHECK(detect_scd(mi.schedule).clean);

  // the relaxation with zero penalty is a lower bound
  BuilderConfig relaxed = cfg;
  relaxed.alpha = 0.0;
  CHECK(mi.objective >= solve_relaxation(f, fc, relaxed).base_objective - 1e-9);

  CHECK_THROWS_AS(mi_oracle(f, profile(f, 5), cfg, 4), Error);
  try {
    mi_oracle(f, profile(f, 5), cfg, 4);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BudgetExceeded);
  }
}

TEST_CASE("energy-limited fixture: relaxation with penalty matches the pattern search") {
  const Feeder f = load_feeder(kData + "/two_node.feeder");
  BuilderConfig cfg;
  cfg.alpha = 0.01;
  cfg.b_init = Eigen::VectorXd::Constant(1, 0.0005);
  const ForecastSeries fc = profile(f, 3);
  const RelaxedSolve r = solve_relaxation(f, fc, cfg);
  const MiOracleResult mi = mi_oracle(f, fc, cfg);
  CHECK(mi.patterns == 8);
  CHECK(std::abs(r.base_objective - mi.objective) <= 1e-6 * std::abs(mi.objective));
}

TEST_CASE("unloaded feeder: every pattern is feasible and nothing moves") {
  const Feeder f = load_feeder(kData + "/two_node.feeder");
  ForecastSeries fc = profile(f, 2);
  fc.load.setZero();
  const MiOracleResult mi = mi_oracle(f, fc, BuilderConfig{});
  CHECK(mi.feasible == 4);
  CHECK(std::abs(mi.objective) <= 1e-9);
  CHECK(mi.schedule.p_dis.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("certificate soundness on randomized instances") {
  const Feeder f = load_feeder(kData + "/two_node.feeder");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> soc(0.0, 0.05), alpha(0.0, 0.05), load(0.2, 1.0);
  int certified = 0;
  for (int trial = 0; trial < 12; ++trial) {
    BuilderConfig cfg;
    cfg.alpha = alpha(rng);
    cfg.b_init = Eigen::VectorXd::Constant(1, soc(rng));
    if (trial % 3 == 2) {
      cfg.objective.kind = ObjectiveKind::SoCTrack;
      cfg.objective.b_target = soc(rng);
    }
    const ForecastSeries fc = scale_case(profile(f, 4, static_cast<unsigned>(trial)), load(rng), 1.0);
    const RelaxedSolve r = solve_relaxation(f, fc, cfg);
    const CertificateReport c = check_certificates(cfg, extract_duals(r.problem, r.result.y, r.result.z), fc.dt_hours);
    if (c.theorem()) {
      ++certified;
      CHECK(detect_scd(r.schedule).clean);
    }
  }
  CHECK(certified >= 4);
}
