#pragma once

#include <Eigen/Dense>

#include "dispatch/conic.hpp"

namespace dispatch::conic {

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter, NumericalFailure };

const char* to_string(SolveStatus s);

struct SolverConfig {
  double gap_tol = 1e-8;   // relative duality gap
  double feas_tol = 1e-8;  // relative primal/dual residuals
  int max_iter = 200;
  double static_reg = 1e-9;
  int refine_steps = 8;
  int equilibration_passes = 15;
  // Once the tolerances above are met, keep iterating (at most `polish_iters`
  // more steps) towards `polish_tol` and return the best iterate seen.
  double polish_tol = 1e-13;
  int polish_iters = 8;
  bool verbose = false;
};

struct SolveResult {
  SolveStatus status = SolveStatus::MaxIter;
  Eigen::VectorXd x, s, y, z;
  double objective = 0.0;       // c'x
  double dual_objective = 0.0;  // -b'y - h'z
  double gap = 0.0;             // s'z
  double rel_gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  double wall_time = 0.0;  // seconds
};

/// Homogeneous self-dual interior point method with Nesterov-Todd scaling and
/// Mehrotra predictor-corrector steps. Single-threaded and deterministic.
SolveResult solve(const ConeProgram& program, const SolverConfig& cfg = {});

struct ResidualReport {
  double primal_eq = 0.0;      // ||Ax - b|| / (1 + ||b||)
  double primal_cone = 0.0;    // ||Gx + s - h|| / (1 + ||h||)
  double primal_eq_abs = 0.0;
  double primal_cone_abs = 0.0;
  double dual = 0.0;           // ||A'y + G'z + c|| / (1 + ||c||)
  double gap = 0.0;            // s'z
  double rel_gap = 0.0;        // s'z / max(1, |c'x|)
  double objective_gap = 0.0;  // |c'x - (-b'y - h'z)| / max(1, |c'x|)
  double s_margin = 0.0;       // cone_margin(s), >= 0 when s in K
  double z_margin = 0.0;
  double max_complementarity = 0.0;  // max over cones of |s_k' z_k|
  bool pass = false;
};

/// Recomputes every optimality residual directly from the result vectors.
ResidualReport certify(const ConeProgram& program, const SolveResult& result, const SolverConfig& cfg = {});

}  // namespace dispatch::conic
