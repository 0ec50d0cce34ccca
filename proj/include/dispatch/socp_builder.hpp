#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "dispatch/conic.hpp"
#include "dispatch/network.hpp"

namespace dispatch {

enum class ObjectiveKind { LossMin, VoltDev, HeadTrack, Degradation, VBTrack, SoCTrack };

const char* to_string(ObjectiveKind k);
ObjectiveKind parse_objective(std::string_view name);

/// Objective plus the reference data its kind needs.
struct Objective {
  ObjectiveKind kind = ObjectiveKind::LossMin;
  double w_nom = 1.0;                 // VoltDev: target squared magnitude
  std::optional<Eigen::VectorXd> p_ref;  // HeadTrack (head real power) / VBTrack (net discharge), one per step
  std::optional<double> b_target;     // SoCTrack: terminal SoC per battery phase (pu*h)
};

enum class BatteryModel { Exact, Simplified };

const char* to_string(BatteryModel m);
BatteryModel parse_battery_model(std::string_view name);

/// Fixed operating mode of one battery phase at one step.
enum class Mode : std::int8_t { Free, Charge, Discharge };

struct BuilderConfig {
  double alpha = 0.01;
  BatteryModel battery_model = BatteryModel::Exact;
  Objective objective;
  /// Empty, or one entry per (battery slot, step), slot-major. Charge pins P^d = 0,
  /// Discharge pins P^c = 0.
  std::vector<Mode> modes;
  /// Empty, or one initial SoC per battery slot overriding the device data.
  Eigen::VectorXd b_init;

  void validate() const;
};

/// One (node, phase) position of a device.
struct Slot {
  int node = -1;
  int phase = -1;
  friend bool operator==(const Slot&, const Slot&) = default;
};

std::vector<Slot> battery_slots(const Feeder& feeder);
std::vector<Slot> solar_slots(const Feeder& feeder);

/// Variable and row indices of the assembled program. Matrices hold -1 where an
/// entry does not exist (masked phase, pinned mode, slack node).
struct ProblemLayout {
  int horizon = 0;
  int vars_per_step = 0;
  int slack = -1;
  Eigen::Vector3d slack_mag = Eigen::Vector3d::Zero();
  std::vector<Slot> batteries;
  std::vector<Slot> solars;

  // Hermitian W per node and I per branch: row 9*elem + 3*i + j, column t.
  Eigen::MatrixXi w_re, w_im, i_re, i_im;
  // Full S per branch, row 9*branch + 3*i + j.
  Eigen::MatrixXi s_re, s_im;
  // Device variables, row = slot.
  Eigen::MatrixXi p_dis, p_ch, q_bat, soc, p_sol, q_sol;
  // Net injection at device (node, phase), row = 3*node + phase.
  Eigen::MatrixXi p_net, q_net;

  // Equality rows (index into A / y).
  Eigen::MatrixXi row_real_balance;  // per battery slot: device real balance at its node/phase
  Eigen::MatrixXi row_soc_dyn;       // per battery slot
  // Orthant rows (index into G / z).
  Eigen::MatrixXi row_soc_up, row_soc_low, row_dis_up, row_dis_low, row_ch_up, row_ch_low;
  // First row of the battery inverter cone (index into G / z).
  Eigen::MatrixXi cone_bat;

  // Per step: coefficients of sum_l diag(R_l o I_l) and of the head-node real power.
  std::vector<std::vector<std::pair<int, double>>> loss_terms, head_terms;

  /// Quadratic epigraph tau >= u^2 with u = sum coef*x + constant.
  struct Epigraph {
    int tau = -1;
    std::vector<std::pair<int, double>> terms;
    double constant = 0.0;
  };
  std::vector<Epigraph> epigraphs;
};

struct ConicProblem {
  conic::ConeProgram program;
  Eigen::VectorXd penalty;  // alpha-term part of program.c
  ProblemLayout layout;
  BuilderConfig config;
  ForecastSeries forecast;

  int num_vars() const { return program.num_vars(); }
};

/// Device set-points and relaxed network state. Device matrices are slot x T.
struct DispatchSchedule {
  double dt_hours = 1.0 / 60.0;
  std::vector<Slot> batteries;
  std::vector<Slot> solars;
  Eigen::MatrixXd p_dis, p_ch, q_bat, soc;
  Eigen::MatrixXd p_sol, q_sol;
  Eigen::MatrixXd voltage_mag;  // row 3*node + phase, sqrt of diag(W)
  Eigen::VectorXd loss;         // per step, sum of diag(R o I)
  Eigen::VectorXd head_power;   // per step, real power entering at the slack

  int horizon() const { return static_cast<int>(p_dis.cols()); }
  /// Net battery discharge P^d - P^c.
  Eigen::MatrixXd net_battery() const { return p_dis - p_ch; }
};

/// Multipliers attached to battery rows, each slot x T.
struct DualBundle {
  Eigen::MatrixXd lambda_p;               // device real balance
  Eigen::MatrixXd lambda_s;               // inverter circle, quadratic-form scaling
  Eigen::MatrixXd lambda_d_low, lambda_d_up;
  Eigen::MatrixXd lambda_c_low, lambda_c_up;
  Eigen::MatrixXd beta_up, beta_low;      // SoC upper and lower bounds
  Eigen::MatrixXd nu;                     // SoC dynamics
};

/// Multi-period branch-flow cone relaxation without charge/discharge complementarity.
ConicProblem build(const Feeder& feeder, const ForecastSeries& forecast, const BuilderConfig& cfg);

DispatchSchedule extract_schedule(const ConicProblem& problem, const Eigen::VectorXd& x);
DualBundle extract_duals(const ConicProblem& problem, const Eigen::VectorXd& y, const Eigen::VectorXd& z);

double objective_value(const ConicProblem& problem, const Eigen::VectorXd& x);
/// Objective without the alpha term.
double base_objective_value(const ConicProblem& problem, const Eigen::VectorXd& x);

/// Rank-one AC state of one step: node voltages (3 x nodes) and branch currents
/// (3 x branches), entries outside the active phases ignored.
struct AcState {
  Eigen::MatrixXcd voltage;
  Eigen::MatrixXcd current;
};

/// Maps an AC operating point plus device set-points to the program's variable
/// space (W = vv^H, I = ii^H, S = v i^H, epigraphs tight).
Eigen::VectorXd lift(const ConicProblem& problem, const Feeder& feeder, const DispatchSchedule& schedule,
                     const std::vector<AcState>& states);

void dump(const ConicProblem& problem, std::ostream& os);

}  // namespace dispatch
