#include "lqk/study.hpp"

#include <cmath>
#include <ostream>

#include "lqk/detail/format.hpp"
#include "lqk/detail/parallel.hpp"

namespace lqk {

std::shared_ptr<const LQKernel> build_kernel(const RunConfig& cfg) {
  return std::make_shared<const LQKernel>(cfg.system.make(), cfg.grid_points, cfg.mode);
}

Problem build_problem(const RunConfig& cfg, std::shared_ptr<const LQKernel> kernel) {
  Problem prob;
  prob.kernel = kernel ? std::move(kernel) : build_kernel(cfg);
  const double T = prob.kernel->horizon();
  prob.spec.constraints = cfg.constraints;
  prob.spec.loss_points = cfg.loss_points;
  prob.spec.x0 = cfg.x0;
  prob.spec.lambda_cond = cfg.solver.lambda_cond;
  if (cfg.constraints.count() > 0) {
    prob.covering = cfg.covering.build(T, cfg.constraints.count());
    prob.tightened = tighten(*prob.kernel, cfg.constraints, prob.covering, cfg.eta.options());
  }
  prob.program = assemble(prob.spec, *prob.kernel, prob.tightened);
  return prob;
}

namespace {

void finish(RunResult& res, const RunConfig& cfg) {
  const auto status = res.solution.status;
  if (status != SolveStatus::kOptimal && status != SolveStatus::kMaxIter) return;
  const auto& kernel = res.problem.kernel;
  const bool zero_q = kernel->mode() == KernelMode::kZeroQ;
  res.trajectory = reconstruct(kernel, res.problem.program, res.solution, cfg.dense_factor, zero_q);
  res.audit = audit(*res.trajectory, cfg.constraints);
  if (zero_q) {
    res.cost = cost_report(*res.trajectory, res.solution);
    res.dynamics_mismatch = dynamics_mismatch(kernel->transition(), *res.trajectory);
  }
}

SolveOptions solve_options(const RunConfig& cfg) {
  return {cfg.solver.tol, cfg.solver.max_iter};
}

StudyRow row_of(double value, const RunResult& res) {
  StudyRow row;
  row.value = value;
  row.status = to_string(res.solution.status);
  row.objective = res.solution.objective;
  row.z = res.solution.z;
  row.linear_cost = res.solution.linear_cost;
  row.iterations = res.solution.iterations;
  if (res.trajectory) {
    row.terminal_state = res.audit.terminal_state;
    row.state_max = res.audit.state_max;
    row.state_min = res.audit.state_min;
    row.max_violation = res.audit.max_violation;
  } else {
    row.max_violation = std::nan("");
  }
  return row;
}

nlohmann::json vec_json(const Vec& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

RunResult run(const RunConfig& cfg, std::shared_ptr<const LQKernel> kernel) {
  RunResult res;
  res.problem = build_problem(cfg, std::move(kernel));
  res.solution = solve(res.problem.program, solve_options(cfg));
  finish(res, cfg);
  return res;
}

void write_report_json(std::ostream& out, const RunResult& res) {
  using nlohmann::json;
  const auto& sol = res.solution;
  const auto& prog = res.problem.program;
  json j;
  j["status"] = to_string(sol.status);
  j["solver"] = {{"iterations", sol.iterations},
                 {"inaccurate", sol.inaccurate},
                 {"polished", sol.polished},
                 {"primal_residual", sol.primal_residual},
                 {"dual_residual", sol.dual_residual},
                 {"gap", sol.gap},
                 {"infeasibility_residual", sol.infeasibility_residual},
                 {"wall_time", sol.wall_time},
                 {"lambda_cond", sol.lambda_cond}};
  j["program"] = {{"basis_size", prog.basis.size()},
                  {"equalities", prog.equalities.size()},
                  {"soc_rows", prog.soc_rows.size()},
                  {"kernel_mode", res.problem.kernel->mode() == KernelMode::kZeroQ ? "zero_q"
                                                                                    : "general_q"}};
  j["objective"] = {{"value", sol.objective}, {"z", sol.z}, {"linear_cost", sol.linear_cost}};
  if (res.cost) {
    const auto& c = *res.cost;
    j["objective"]["breakdown"] = {{"initial_sq", c.initial_sq},
                                   {"state_cost", c.state_cost},
                                   {"control_cost", c.control_cost},
                                   {"linear_cost", c.linear_cost},
                                   {"z_sq", c.z_sq},
                                   {"relative_mismatch", c.relative_mismatch},
                                   {"mismatch", c.mismatch}};
  }
  if (res.trajectory) {
    json per = json::array();
    for (std::size_t i = 0; i < res.audit.constraints.size(); ++i) {
      per.push_back({{"constraint", i + 1},
                     {"max_violation", res.audit.constraints[i].max_violation},
                     {"argmax_time", res.audit.constraints[i].argmax_time}});
    }
    j["feasibility"] = {{"max_violation", res.audit.max_violation},
                        {"feasible", res.audit.feasible()},
                        {"constraints", per},
                        {"initial_state", vec_json(res.audit.initial_state)},
                        {"terminal_state", vec_json(res.audit.terminal_state)},
                        {"state_max", vec_json(res.audit.state_max)},
                        {"state_min", vec_json(res.audit.state_min)},
                        {"samples", res.trajectory->times.size()}};
  }
  if (res.dynamics_mismatch) j["dynamics_mismatch"] = *res.dynamics_mismatch;
  out << j.dump(2) << '\n';
}

StudyAxis parse_axis(const std::string& name) {
  if (name == "grid") return StudyAxis::kGrid;
  if (name == "eta-scale") return StudyAxis::kEtaScale;
  throw UsageError("axis must be 'grid' or 'eta-scale'");
}

std::string to_string(StudyAxis axis) { return axis == StudyAxis::kGrid ? "grid" : "eta-scale"; }

std::vector<StudyRow> run_study(const RunConfig& cfg, StudyAxis axis,
                                const std::vector<double>& values) {
  std::vector<StudyRow> rows;
  if (values.empty()) return rows;
  const auto kernel = build_kernel(cfg);

  std::optional<Problem> base;
  std::string base_error;
  if (axis == StudyAxis::kEtaScale) {
    try {
      base = build_problem(cfg, kernel);
    } catch (const std::exception& e) {
      base_error = e.what();
    }
  }

  auto run_row = [&](double v) -> StudyRow {
    try {
      RunResult res;
      if (axis == StudyAxis::kGrid) {
        if (!(v >= 1.0) || v != std::floor(v)) throw UsageError("grid values must be positive integers");
        RunConfig c = cfg;
        c.covering = CoveringConfig{};
        c.covering.n_points = static_cast<int>(v);
        c.covering.zero_radius = cfg.covering.zero_radius;
        res.problem = build_problem(c, kernel);
      } else {
        if (!base) throw UsageError(base_error);
        if (!(v >= 0.0)) throw UsageError("eta scale factors must be nonnegative");
        res.problem = *base;
        for (auto& r : res.problem.program.soc_rows) {
          for (int i : cfg.eta.study_families) {
            if (r.constraint == i) r.eta *= v;
          }
        }
      }
      res.solution = solve(res.problem.program, solve_options(cfg));
      finish(res, cfg);
      return row_of(v, res);
    } catch (const std::exception& e) {
      StudyRow row;
      row.value = v;
      row.status = "Error";
      row.objective = row.z = row.linear_cost = row.max_violation = std::nan("");
      row.error = e.what();
      return row;
    }
  };

  // Each row writes only its own slot, so the output is in input order
  // whatever the worker count.
  rows.resize(values.size());
  detail::parallel_for(static_cast<int>(values.size()),
                       [&](int i) { rows[static_cast<std::size_t>(i)] = run_row(values[static_cast<std::size_t>(i)]); });
  return rows;
}

void write_study_csv(std::ostream& out, StudyAxis axis, const std::vector<StudyRow>& rows,
                     int state_dim) {
  out << (axis == StudyAxis::kGrid ? "n_points" : "eta_scale")
      << ",status,objective,z,linear_cost";
  for (const char* prefix : {"x_T_", "max_x_", "min_x_"}) {
    for (int i = 1; i <= state_dim; ++i) out << ',' << prefix << i;
  }
  out << ",max_violation,iterations,error\n";
  auto vec_cols = [&](const Vec& v) {
    for (int i = 0; i < state_dim; ++i) {
      out << ',' << (i < v.size() ? detail::fmt(v(i)) : std::string("nan"));
    }
  };
  for (const auto& r : rows) {
    out << detail::fmt(r.value) << ',' << r.status << ',' << detail::fmt(r.objective) << ','
        << detail::fmt(r.z) << ',' << detail::fmt(r.linear_cost);
    vec_cols(r.terminal_state);
    vec_cols(r.state_max);
    vec_cols(r.state_min);
    std::string err = r.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
    }
    out << ',' << detail::fmt(r.max_violation) << ',' << r.iterations << ',' << err << '\n';
  }
}

}  // namespace lqk
