#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "dispatch/powerflow.hpp"
#include "dispatch/socp_builder.hpp"

namespace dispatch {

struct RestoreConfig {
  double fd_step = 1e-5;       // central-difference step, pu
  double penalty = 1e4;        // weight on squared voltage/line violations
  int continuation = 1;        // penalty doublings after the first pass
  double ineq_tol = 1e-6;
  double improve_tol = 1e-10;  // stop when the penalized loss improves by less
  int max_iter = 200;
  bool solar_active = true;    // false keeps solar P at the relaxed value
  PowerFlowConfig pf{1e-12, 100};

  void validate() const;
};

/// Restored set-points and exact state of one step.
struct PeriodResult {
  int t = 0;
  Eigen::VectorXd p_bat;  // fixed net discharge per battery slot
  Eigen::VectorXd q_bat;
  Eigen::VectorXd p_sol, q_sol;
  PowerFlowResult flow;
  double loss = 0.0;       // sum of R_ii |i_i|^2 at the restored point
  double init_loss = 0.0;  // same at the projected relaxed set-points
  double objective = 0.0;  // penalized
  double init_objective = 0.0;
  double voltage_violation = 0.0;
  double line_violation = 0.0;
  double inverter_violation = 0.0;
  bool feasible = false;
  int iterations = 0;
  int sweeps = 0;
  std::string error;  // non-empty when the step failed
};

struct RestoreResult {
  std::vector<PeriodResult> periods;
  double dnlp_opt = 0.0;  // sum of period losses
  bool all_feasible = true;
  int failed = 0;
};

/// Local minimization of exact losses at step t with battery active power
/// pinned to the schedule. Throws PowerFlowDiverged when the starting point
/// does not admit a power-flow solution. An infeasible final point is
/// returned with `feasible = false` and `error` naming InfeasibleAtFixedP.
PeriodResult restore_timestep(const Feeder& feeder, const ForecastSeries& forecast, const DispatchSchedule& schedule,
                              int t, const RestoreConfig& cfg = {});

/// All steps, each independent of the others. `threads` <= 1 runs serially;
/// results do not depend on the thread count.
RestoreResult restore_horizon(const Feeder& feeder, const ForecastSeries& forecast, const DispatchSchedule& schedule,
                              const RestoreConfig& cfg = {}, int threads = 1);

/// The relaxed schedule with the restored reactive/solar set-points and the
/// exact voltage magnitudes substituted.
DispatchSchedule restored_schedule(const DispatchSchedule& relaxed, const RestoreResult& restored);

struct GapReport {
  double socp_opt = 0.0;
  double dnlp_opt = 0.0;
  double gap_pct = 0.0;
};

/// Throws OrderingViolated when dnlp_opt < socp_opt - gap_tol.
GapReport gap(double socp_opt, double dnlp_opt, double gap_tol = 1e-8);

}  // namespace dispatch
