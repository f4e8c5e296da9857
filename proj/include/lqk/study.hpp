#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lqk/config.hpp"
#include "lqk/trajectory.hpp"

namespace lqk {

/// Everything assembled from a RunConfig before the solve.
struct Problem {
  std::shared_ptr<const LQKernel> kernel;
  ProblemSpec spec;
  Covering covering;
  TightenedConstraints tightened;
  SOCProgram program;
};

std::shared_ptr<const LQKernel> build_kernel(const RunConfig& cfg);
/// Reuses `kernel` when given (it must come from the same system and grid).
Problem build_problem(const RunConfig& cfg, std::shared_ptr<const LQKernel> kernel = nullptr);

struct RunResult {
  Problem problem;
  Solution solution;
  /// Present for Optimal and MaxIter solutions. In GeneralQ mode controls
  /// are not reconstructed and the cost and dynamics checks are skipped.
  std::optional<SampledTrajectory> trajectory;
  FeasibilityReport audit;
  std::optional<CostReport> cost;
  std::optional<double> dynamics_mismatch;
};

RunResult run(const RunConfig& cfg, std::shared_ptr<const LQKernel> kernel = nullptr);

void write_report_json(std::ostream& out, const RunResult& result);

enum class StudyAxis { kGrid, kEtaScale };

StudyAxis parse_axis(const std::string& name);
std::string to_string(StudyAxis axis);

struct StudyRow {
  double value = 0.0;
  std::string status;
  double objective = 0.0;
  double z = 0.0;
  double linear_cost = 0.0;
  Vec terminal_state;
  Vec state_max;
  Vec state_min;
  double max_violation = 0.0;
  int iterations = 0;
  /// Non-empty when the row failed before producing a solution.
  std::string error;
};

/// grid: N_P per value, eta recomputed per covering. eta-scale: the eta of
/// the configured study families multiplied by each value. One row per
/// value, in input order; failures are recorded in the row and the study
/// continues. Rows run on LQK_THREADS workers sharing one kernel.
std::vector<StudyRow> run_study(const RunConfig& cfg, StudyAxis axis,
                                const std::vector<double>& values);

/// Columns value, status, objective, z, linear_cost, x_T_*, max_x_*, min_x_*,
/// max_violation, iterations, error. `state_dim` sizes the header when no
/// row is available.
void write_study_csv(std::ostream& out, StudyAxis axis, const std::vector<StudyRow>& rows,
                     int state_dim);

}  // namespace lqk
