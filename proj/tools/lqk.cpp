// lqk: command-line front end for the LQ kernel solver.
//
// Exit codes: 0 success, 1 unexpected failure, 2 bad config or arguments,
// 3 solver finished without an Optimal status.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lqk/config.hpp"
#include "lqk/study.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNotOptimal = 3;

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  int dense_factor = 0;
  double tol = 0.0;
  int max_iter = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  auto* cfg = cmd->add_option("--config", c.config, "JSON run configuration");
  auto* pre = cmd->add_option("--preset", c.preset, "built-in configuration (pendulum, infeasible)");
  cfg->excludes(pre);
  cmd->add_option("--out", c.out, "output directory (default: the config's out_dir)");
  cmd->add_option("--dense-factor", c.dense_factor, "audit grid refinement")->check(CLI::PositiveNumber);
  cmd->add_option("--tol", c.tol, "solver tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iter", c.max_iter, "solver iteration limit")->check(CLI::PositiveNumber);
}

lqk::RunConfig load(const Common& c) {
  lqk::RunConfig cfg;
  if (!c.config.empty()) {
    cfg = lqk::load_config(c.config);
  } else if (!c.preset.empty()) {
    cfg = lqk::parse_config(nlohmann::json{{"preset", c.preset}});
  } else {
    throw lqk::ConfigError("one of --config or --preset is required");
  }
  if (c.dense_factor > 0) cfg.dense_factor = c.dense_factor;
  if (c.tol > 0.0) cfg.solver.tol = c.tol;
  if (c.max_iter > 0) cfg.solver.max_iter = c.max_iter;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

// Writes through a temporary file so readers never see a partial output.
template <class Fn>
void write_file(const std::string& dir, const std::string& name, Fn&& fn) {
  fs::create_directories(dir);
  const fs::path target = fs::path(dir) / name;
  const fs::path tmp = fs::path(dir) / (name + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    fn(f);
    if (!f) throw std::runtime_error("error writing " + tmp.string());
  }
  fs::rename(tmp, target);
}

int cmd_solve(const Common& c, const std::string& conic) {
  const auto cfg = load(c);
  const auto res = lqk::run(cfg);
  write_file(cfg.out_dir, "report.json", [&](std::ostream& o) { lqk::write_report_json(o, res); });
  if (res.trajectory) {
    write_file(cfg.out_dir, "solution.csv", [&](std::ostream& o) {
      lqk::write_trajectory_csv(o, *res.trajectory, cfg.constraints);
    });
  }
  if (!conic.empty()) lqk::export_conic(res.problem.program, conic);
  const auto& sol = res.solution;
  std::cout << "status " << lqk::to_string(sol.status) << ", objective " << sol.objective
            << ", z " << sol.z << ", iterations " << sol.iterations << '\n';
  if (res.trajectory) {
    std::cout << "max violation " << res.audit.max_violation << ", x(T) = ["
              << res.audit.terminal_state.transpose() << "]\n";
  }
  return sol.status == lqk::SolveStatus::kOptimal ? 0 : kExitNotOptimal;
}

int cmd_study(const Common& c, const std::string& axis_name, const std::vector<double>& values) {
  const auto cfg = load(c);
  const auto axis = lqk::parse_axis(axis_name);
  const auto rows = lqk::run_study(cfg, axis, values);
  write_file(cfg.out_dir, "study.csv", [&](std::ostream& o) {
    lqk::write_study_csv(o, axis, rows, static_cast<int>(cfg.system.A.rows()));
  });
  for (const auto& r : rows) {
    std::cout << lqk::to_string(axis) << ' ' << r.value << ": " << r.status << ", objective "
              << r.objective << ", max violation " << r.max_violation;
    if (!r.error.empty()) std::cout << " (" << r.error << ')';
    std::cout << '\n';
  }
  return 0;
}

int cmd_kernel_table(const Common& c, const std::vector<double>& times) {
  const auto cfg = load(c);
  const auto kernel = lqk::build_kernel(cfg);
  std::vector<double> ts = times;
  if (ts.empty()) ts = {0.0, cfg.system.horizon};
  write_file(cfg.out_dir, "kernel_table.csv",
             [&](std::ostream& o) { lqk::write_kernel_table(o, *kernel, ts); });
  return 0;
}

int cmd_eta_table(const Common& c) {
  const auto cfg = load(c);
  const auto prob = lqk::build_problem(cfg);
  write_file(cfg.out_dir, "eta_table.csv",
             [&](std::ostream& o) { lqk::write_eta_table(o, prob.tightened); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear-quadratic optimal control with kernel methods and SOC constraint tightening"};
  app.require_subcommand(1);

  Common solve_opts, study_opts, kernel_opts, eta_opts;
  std::string conic;
  std::string axis = "grid";
  std::vector<double> values;
  std::vector<double> times;

  auto* solve = app.add_subcommand("solve", "solve one problem; writes solution.csv and report.json");
  add_common(solve, solve_opts);
  solve->add_option("--export-conic", conic, "also write the conic program as JSON");

  auto* study = app.add_subcommand("study", "solve along a grid or eta-scale axis; writes study.csv");
  add_common(study, study_opts);
  study->add_option("--axis", axis, "grid or eta-scale")
      ->check(CLI::IsMember({"grid", "eta-scale"}))
      ->capture_default_str();
  study->add_option("--values", values, "axis values")->delimiter(',');

  auto* ktab = app.add_subcommand("kernel-table", "dump kernel blocks; writes kernel_table.csv");
  add_common(ktab, kernel_opts);
  ktab->add_option("--times", times, "evaluation times")->delimiter(',');

  auto* etab = app.add_subcommand("eta-table", "dump tightening coefficients; writes eta_table.csv");
  add_common(etab, eta_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*solve) return cmd_solve(solve_opts, conic);
    if (*study) return cmd_study(study_opts, axis, values);
    if (*ktab) return cmd_kernel_table(kernel_opts, times);
    if (*etab) return cmd_eta_table(eta_opts);
  } catch (const lqk::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const lqk::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
