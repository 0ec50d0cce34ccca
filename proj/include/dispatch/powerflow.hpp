#pragma once

#include <Eigen/Dense>

#include "dispatch/network.hpp"
#include "dispatch/socp_builder.hpp"

namespace dispatch {

/// Net complex injection per (phase, node), 3 x nodes, pu. Loads negative.
struct InjectionSet {
  Eigen::MatrixXcd s;

  static InjectionSet zeros(const Feeder& feeder);
};

struct PowerFlowConfig {
  double tol = 1e-9;  // max nodal complex-power mismatch, pu
  int max_iter = 100;
};

struct PowerFlowResult {
  Eigen::MatrixXcd voltage;  // 3 x nodes
  Eigen::MatrixXcd current;  // 3 x branches, parent to child
  Eigen::MatrixXcd flow;     // 3 x branches, sending-end power
  Eigen::Vector3cd head = Eigen::Vector3cd::Zero();  // per-phase power leaving the slack
  double loss = 0.0;       // physical, sum of Re(dV conj(i))
  double diag_loss = 0.0;  // sum of R_ii |i_i|^2, the dispatch objective
  double max_mismatch = 0.0;
  bool converged = false;
  int iterations = 0;

  double head_power() const { return head.real().sum(); }
};

/// Forward-backward sweep with constant-power injections from a flat start (or
/// from `init`, 3 x nodes). Throws NotConverged after max_iter sweeps.
PowerFlowResult sweep(const Feeder& feeder, const InjectionSet& injections, const PowerFlowConfig& cfg = {},
                      const Eigen::MatrixXcd* init = nullptr);

/// Sum over branches and phases of Re(dV conj(i)).
double losses(const Feeder& feeder, const PowerFlowResult& result);

double diag_losses(const Feeder& feeder, const PowerFlowResult& result);

/// Largest |V conj(i_in - i_out) + s| over non-slack nodes and phases.
double nodal_mismatch(const Feeder& feeder, const InjectionSet& injections, const PowerFlowResult& result);

/// Injections implied by the forecast loads and a schedule's device set-points at step t.
InjectionSet schedule_injections(const Feeder& feeder, const ForecastSeries& forecast, const DispatchSchedule& schedule,
                                 int t);

struct VoltageErrorReport {
  Eigen::MatrixXd error;  // 3 x nodes, | |V_ref| - |V_sweep| |
  double worst = 0.0;
  int worst_node = -1;
  int worst_phase = -1;
  PowerFlowResult flow;
};

/// Sweeps the schedule's injections at step t and compares against the schedule's voltages.
VoltageErrorReport validate_schedule(const Feeder& feeder, const ForecastSeries& forecast,
                                     const DispatchSchedule& schedule, int t, const PowerFlowConfig& cfg = {});

/// Compares a given voltage-magnitude field (3 x nodes) against a sweep of `injections`.
VoltageErrorReport compare_voltages(const Feeder& feeder, const InjectionSet& injections,
                                    const Eigen::MatrixXd& voltage_mag, const PowerFlowConfig& cfg = {});

}  // namespace dispatch
