#include "dispatch/scd.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace dispatch {

RelaxedSolve solve_relaxation(const Feeder& feeder, const ForecastSeries& forecast, const BuilderConfig& cfg,
                              const conic::SolverConfig& solver) {
  RelaxedSolve out;
  const auto t0 = std::chrono::steady_clock::now();
  out.problem = build(feeder, forecast, cfg);
  out.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.result = conic::solve(out.problem.program, solver);
  if (out.result.status != conic::SolveStatus::Optimal)
    throw Error(Errc::SolveFailed, std::string("relaxation ended with status ") + conic::to_string(out.result.status));
  out.schedule = extract_schedule(out.problem, out.result.x);
  out.base_objective = base_objective_value(out.problem, out.result.x);
  return out;
}

SCDReport detect_scd(const DispatchSchedule& s, double scd_tol) {
  if (s.p_dis.rows() != s.p_ch.rows() || s.p_dis.cols() != s.p_ch.cols())
    throw Error(Errc::SizeMismatch, "charge and discharge series differ in shape");
  SCDReport r;
  r.batteries = s.batteries;
  r.tol = scd_tol;
  r.product = s.p_dis.cwiseProduct(s.p_ch);
  r.flagged = r.product.array() > scd_tol;
  r.total = r.product.sum();
  r.clean = !r.flagged.any();
  return r;
}

Eigen::MatrixXd gamma(const DualBundle& d) {
  const Eigen::MatrixXd diff = d.beta_up - d.beta_low;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(diff.rows(), diff.cols());
  for (Eigen::Index k = 0; k < diff.rows(); ++k) {
    double acc = 0.0;
    for (Eigen::Index t = diff.cols() - 1; t >= 0; --t) {
      acc += diff(k, t);
      g(k, t) = acc;
    }
  }
  return g;
}

namespace {

bool c1_holds(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::LossMin:
    case ObjectiveKind::VoltDev:
    case ObjectiveKind::HeadTrack:
    case ObjectiveKind::VBTrack:
      return true;  // d/dPc + d/dPd = 0
    case ObjectiveKind::Degradation:
      return true;  // = 2
    case ObjectiveKind::SoCTrack:
      return false;  // sign follows B_T - B_target
  }
  throw Error(Errc::UnknownObjective, "objective kind out of range");
}

}  // namespace

CertificateReport check_certificates(const BuilderConfig& cfg, const DualBundle& d, double dt, double tol) {
  CertificateReport r;
  r.objective = cfg.objective.kind;
  r.alpha = cfg.alpha;
  r.dt_hours = dt;
  r.c1 = c1_holds(cfg.objective.kind);
  r.c2 = cfg.alpha > tol;
  r.gamma = gamma(d);
  r.c3_literal = r.gamma.array() >= -cfg.alpha - tol;
  r.c3_margin = (cfg.alpha - dt * r.gamma.array()).matrix();
  r.c3 = r.c3_margin.array() > tol;
  r.c3_all = r.c3.all();
  r.c3_literal_all = r.c3_literal.all();
  r.lambda_p = d.lambda_p;
  r.a1 = (d.lambda_p.array() >= -tol).all();
  r.a2 = r.c2;
  return r;
}

RelaxedSolve two_step_enforce(const Feeder& feeder, const ForecastSeries& forecast, const BuilderConfig& cfg,
                              const DispatchSchedule& first, const conic::SolverConfig& solver) {
  const int nb = static_cast<int>(first.batteries.size()), T = first.horizon();
  if (T != forecast.horizon()) throw Error(Errc::HorizonMismatch, "first-stage schedule and forecast differ in length");
  BuilderConfig second = cfg;
  second.modes.assign(static_cast<std::size_t>(nb * T), Mode::Free);
  for (int k = 0; k < nb; ++k)
    for (int t = 0; t < T; ++t) {
      const double net = first.p_dis(k, t) - first.p_ch(k, t);
      second.modes[static_cast<std::size_t>(k * T + t)] = net >= 0.0 ? Mode::Discharge : Mode::Charge;
    }
  try {
    return solve_relaxation(feeder, forecast, second, solver);
  } catch (const Error& e) {
    if (e.code() == Errc::SolveFailed) throw Error(Errc::SecondStageInfeasible, e.what());
    throw;
  }
}

MiOracleResult mi_oracle(const Feeder& feeder, const ForecastSeries& forecast, const BuilderConfig& cfg,
                         int mode_budget, const conic::SolverConfig& solver) {
  const int nb = static_cast<int>(battery_slots(feeder).size()), T = forecast.horizon();
  const int slots = nb * T;
  if (slots > mode_budget || slots > 30)
    throw Error(Errc::BudgetExceeded, std::to_string(slots) + " mode slots exceed budget " + std::to_string(mode_budget));
  MiOracleResult best;
  best.objective = std::numeric_limits<double>::infinity();
  BuilderConfig pat = cfg;
  pat.alpha = 0.0;
  pat.modes.assign(static_cast<std::size_t>(slots), Mode::Charge);
  const long count = 1L << slots;
  for (long mask = 0; mask < count; ++mask) {
    for (int i = 0; i < slots; ++i) pat.modes[static_cast<std::size_t>(i)] = (mask >> i) & 1 ? Mode::Discharge : Mode::Charge;
    ++best.patterns;
    const ConicProblem prob = build(feeder, forecast, pat);
    const conic::SolveResult res = conic::solve(prob.program, solver);
    if (res.status != conic::SolveStatus::Optimal) continue;
    ++best.feasible;
    const double obj = base_objective_value(prob, res.x);
    if (obj < best.objective) {
      best.objective = obj;
      best.schedule = extract_schedule(prob, res.x);
      best.modes = pat.modes;
    }
  }
  if (best.feasible == 0) throw Error(Errc::SolveFailed, "no mode pattern admits a feasible point");
  return best;
}

}  // namespace dispatch
