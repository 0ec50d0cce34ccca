#pragma once

#include <Eigen/Dense>

#include <vector>

#include "dispatch/socp_builder.hpp"
#include "dispatch/solver.hpp"

namespace dispatch {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Build, solve and extract in one call. Throws SolveFailed unless the solver
/// reports Optimal.
struct RelaxedSolve {
  ConicProblem problem;
  conic::SolveResult result;
  DispatchSchedule schedule;
  double base_objective = 0.0;
  double build_seconds = 0.0;
};

RelaxedSolve solve_relaxation(const Feeder& feeder, const ForecastSeries& forecast, const BuilderConfig& cfg,
                              const conic::SolverConfig& solver = {});

struct SCDReport {
  std::vector<Slot> batteries;
  Eigen::MatrixXd product;  // P^d * P^c, slot x T
  BoolMatrix flagged;
  double total = 0.0;       // sum of all products
  double tol = 1e-6;
  bool clean = true;

  int num_flagged() const { return static_cast<int>(flagged.count()); }
};

SCDReport detect_scd(const DispatchSchedule& schedule, double scd_tol = 1e-6);

/// Suffix sums of beta_up - beta_low along each row.
Eigen::MatrixXd gamma(const DualBundle& duals);

struct CertificateReport {
  ObjectiveKind objective = ObjectiveKind::LossMin;
  double alpha = 0.0;
  double dt_hours = 0.0;
  bool c1 = false;
  bool c2 = false;
  Eigen::MatrixXd gamma;    // slot x T
  BoolMatrix c3_literal;    // gamma >= -alpha
  Eigen::MatrixXd c3_margin;  // alpha - gamma * dt, must be > 0 for the stationarity argument
  BoolMatrix c3;
  bool c3_all = false;
  bool c3_literal_all = false;
  Eigen::MatrixXd lambda_p;
  bool a1 = false;
  bool a2 = false;

  bool theorem() const { return c1 && c2 && c3_all; }
  bool corollary() const { return a1 && a2; }
};

/// C1 is decided per objective kind; the rest from the multipliers with tolerance `tol`.
CertificateReport check_certificates(const BuilderConfig& cfg, const DualBundle& duals, double dt_hours,
                                     double tol = 1e-9);

/// Second solve with every battery's mode fixed by the sign of the first
/// stage's net discharge (P* >= 0 pins P^c = 0, otherwise P^d = 0).
RelaxedSolve two_step_enforce(const Feeder& feeder, const ForecastSeries& forecast, const BuilderConfig& cfg,
                              const DispatchSchedule& first, const conic::SolverConfig& solver = {});

struct MiOracleResult {
  DispatchSchedule schedule;
  double objective = 0.0;  // base objective of the best pattern
  std::vector<Mode> modes;
  int patterns = 0;
  int feasible = 0;
};

/// Exhaustive search over charge/discharge patterns, alpha forced to zero.
/// Throws BudgetExceeded when batteries * T exceeds `mode_budget`.
MiOracleResult mi_oracle(const Feeder& feeder, const ForecastSeries& forecast, const BuilderConfig& cfg,
                         int mode_budget = 16, const conic::SolverConfig& solver = {});

}  // namespace dispatch
