#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "lqk/socp.hpp"

namespace lqk {

/// State and control samples of a solution on a dense grid.
///
/// Atom times are merged into the grid. Where the control jumps (at interior
/// atom times) the time appears twice: first with the left limit of u, then
/// with the right limit. Controls are empty when reconstructed without them.
struct SampledTrajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> controls;
  /// sqrt(alpha^T G alpha), from Gram data.
  double rkhs_norm = 0.0;
  /// Quadratures of int u^T R u and int x^T Q x.
  double control_l2_sq = 0.0;
  double state_q_sq = 0.0;
};

/// f = sum_b alpha_b K(., t_b) c_b.
RepresenterFunction to_representer(std::shared_ptr<const LQKernel> kernel,
                                   const SOCProgram& prog, const Vec& alpha);

/// Dense grid: the master grid refined `dense_factor` times, plus atom times.
/// Throws UnsupportedModeError in GeneralQ mode when controls are requested.
SampledTrajectory reconstruct(std::shared_ptr<const LQKernel> kernel, const SOCProgram& prog,
                              const Vec& alpha, int dense_factor = 10, bool with_controls = true);
SampledTrajectory reconstruct(std::shared_ptr<const LQKernel> kernel, const SOCProgram& prog,
                              const Solution& sol, int dense_factor = 10,
                              bool with_controls = true);

/// The sampled control as a right-continuous piecewise-linear input.
SampledControl sampled_control(const SampledTrajectory& traj);

/// sup over the samples of || propagate(x(0), u)(t) - x(t) ||_inf.
double dynamics_mismatch(const StateTransition& st, const SampledTrajectory& traj);

struct ConstraintAudit {
  /// max_t c_i(t)^T x(t) - d_i(t); positive means violated.
  double max_violation = 0.0;
  double argmax_time = 0.0;
};

struct FeasibilityReport {
  std::vector<ConstraintAudit> constraints;
  double max_violation = 0.0;
  Vec initial_state;
  Vec terminal_state;
  /// Componentwise extrema of the state over the samples.
  Vec state_max;
  Vec state_min;

  bool feasible(double tol = 0.0) const { return max_violation <= tol; }
};

FeasibilityReport audit(const SampledTrajectory& traj, const ConstraintSpec& spec);

/// d_i(t) - c_i(t)^T x(t) at every sample; rows are samples.
Mat margins(const SampledTrajectory& traj, const ConstraintSpec& spec);

struct CostReport {
  double initial_sq = 0.0;   // ||x(0)||^2
  double state_cost = 0.0;   // int x^T Q x
  double control_cost = 0.0; // int u^T R u
  double linear_cost = 0.0;
  double z_sq = 0.0;         // from the solver
  double objective = 0.0;
  /// |quadrature norm - z^2| / z^2 (0 when both vanish).
  double relative_mismatch = 0.0;
  bool mismatch = false;
};

inline constexpr double kCostMismatchTol = 1e-4;

CostReport cost_report(const SampledTrajectory& traj, const Solution& sol);

/// CSV with columns t, x_1..x_N, u_1..u_M, margin_1..margin_P.
void write_trajectory_csv(std::ostream& out, const SampledTrajectory& traj,
                          const ConstraintSpec& spec);

}  // namespace lqk
