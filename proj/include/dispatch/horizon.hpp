#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "dispatch/restore.hpp"
#include "dispatch/scd.hpp"

namespace dispatch {

enum class Fallback { None, RaiseAlpha, TwoStep };

const char* to_string(Fallback f);

struct RunConfig {
  int horizon = 30;
  double dt_hours = 1.0 / 60.0;
  int steps = 10;
  LoadCase load_case = LoadCase::HH;
  BuilderConfig builder;
  conic::SolverConfig solver;
  RestoreConfig restore;
  double scd_tol = 1e-6;
  double gap_tol = 1e-8;
  int threads = 1;              // restoration workers
  double budget_seconds = 60.0;  // per-step wall-time warning threshold
  std::uint64_t seed = 1;

  void validate() const;
};

/// Battery SoC carried between steps, one entry per battery slot.
struct PlantState {
  int step = 0;
  Eigen::VectorXd soc;
};

PlantState initial_state(const Feeder& feeder);

struct StepRecord {
  int step = 0;
  bool ok = false;
  std::string error;
  std::vector<std::string> warnings;

  double socp_opt = 0.0;     // relaxed loss of the restored schedule (base objective under LossMin)
  double socp_seconds = 0.0;  // build + solve, all solves of the step
  int solver_iterations = 0;
  conic::ResidualReport residuals;
  CertificateReport certificate;
  SCDReport scd;
  Fallback fallback = Fallback::None;
  double alpha_used = 0.0;

  double dnlp_opt = 0.0;
  double gap_pct = 0.0;
  double restore_seconds = 0.0;
  bool restore_feasible = false;
  double step_seconds = 0.0;

  DispatchSchedule relaxed;   // full-horizon schedule of the solve that was restored
  RestoreResult restored;
  Eigen::VectorXd p_dis, p_ch, q_bat, p_sol, q_sol;  // applied first-step set-points
  PowerFlowResult plant;
  double voltage_error = 0.0;  // restoration state vs. plant sweep, worst case
  Eigen::VectorXd soc_before, soc_after;
};

/// One receding-horizon step starting at absolute step `state.step` of `forecast`.
/// Errors are recorded in the returned record; the state is then carried unchanged.
StepRecord step(const Feeder& feeder, const ForecastSeries& forecast, PlantState& state, const RunConfig& cfg);

struct RunSummary {
  int steps = 0;
  int failed = 0;
  double solve_mean = 0.0, solve_std = 0.0;
  double restore_mean = 0.0, restore_std = 0.0;
  double total_mean = 0.0, total_std = 0.0;
  double gap_rmse = 0.0;   // root mean square of gap_pct over successful steps
  double gap_worst = 0.0;
};

struct RunLog {
  RunConfig config;
  std::vector<StepRecord> records;
  RunSummary summary;
};

/// Runs `cfg.steps` receding steps. `forecast` is the unscaled series; the load
/// case scaling is applied here. It must cover steps + horizon - 1 columns.
RunLog run(const Feeder& feeder, const ForecastSeries& forecast, const RunConfig& cfg);

RunSummary summarize(const std::vector<StepRecord>& records);

/// Writes run.log plus soc.tsv, battery_power.tsv, gap.tsv, reactive.tsv and
/// voltage_error.tsv into `dir`. Returns the written paths. Throws IoError.
std::vector<std::string> report(const RunLog& log, const std::string& dir);

}  // namespace dispatch
