#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lqk/config.hpp"
#include "lqk/errors.hpp"
#include "lqk/study.hpp"

namespace py = pybind11;
using lqk::Mat;
using lqk::Vec;

namespace {

lqk::MatrixFunction constant(const Mat& m) { return lqk::MatrixFunction::constant(m); }

std::optional<lqk::KernelMode> parse_mode(const std::string& mode) {
  if (mode == "auto") return std::nullopt;
  if (mode == "zero_q") return lqk::KernelMode::kZeroQ;
  if (mode == "general_q") return lqk::KernelMode::kGeneralQ;
  throw lqk::UsageError("mode must be 'auto', 'zero_q' or 'general_q'");
}

std::shared_ptr<const lqk::LQKernel> make_kernel(const Mat& a, const Mat& b, const Mat& r,
                                                 std::optional<Mat> q, double horizon,
                                                 int grid_points, const std::string& mode) {
  const Mat qm = q ? *q : Mat::Zero(a.rows(), a.rows());
  lqk::LinearSystem sys(constant(a), constant(b), constant(qm), constant(r), horizon);
  return std::make_shared<const lqk::LQKernel>(std::move(sys), grid_points, parse_mode(mode));
}

// Rows are samples.
Mat stack(const std::vector<Vec>& v) {
  if (v.empty()) return Mat(0, 0);
  Mat m(static_cast<Eigen::Index>(v.size()), v.front().size());
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

py::dict run_config(const std::string& config_json) {
  const auto cfg = lqk::parse_config_text(config_json);
  lqk::RunResult res;
  {
    py::gil_scoped_release release;
    res = lqk::run(cfg);
  }
  std::ostringstream report;
  lqk::write_report_json(report, res);
  const auto& sol = res.solution;
  py::dict out;
  out["status"] = lqk::to_string(sol.status);
  out["objective"] = sol.objective;
  out["z"] = sol.z;
  out["linear_cost"] = sol.linear_cost;
  out["iterations"] = sol.iterations;
  out["polished"] = sol.polished;
  out["alpha"] = sol.alpha;
  out["report_json"] = report.str();
  if (res.trajectory) {
    const auto& tr = *res.trajectory;
    out["times"] = tr.times;
    out["states"] = stack(tr.states);
    out["controls"] = stack(tr.controls);
    out["max_violation"] = res.audit.max_violation;
    out["terminal_state"] = res.audit.terminal_state;
  }
  return out;
}

py::list study_config(const std::string& config_json, const std::string& axis,
                      const std::vector<double>& values) {
  const auto cfg = lqk::parse_config_text(config_json);
  const auto ax = lqk::parse_axis(axis);
  std::vector<lqk::StudyRow> rows;
  {
    py::gil_scoped_release release;
    rows = lqk::run_study(cfg, ax, values);
  }
  py::list out;
  for (const auto& r : rows) {
    py::dict d;
    d["value"] = r.value;
    d["status"] = r.status;
    d["objective"] = r.objective;
    d["z"] = r.z;
    d["max_violation"] = r.max_violation;
    d["terminal_state"] = r.terminal_state;
    d["state_max"] = r.state_max;
    d["state_min"] = r.state_min;
    d["error"] = r.error;
    out.append(std::move(d));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the LQ kernel library";

  // Base first: later translators are tried first, so ConfigError is not
  // swallowed by its UsageError base.
  auto usage = py::register_exception<lqk::UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<lqk::ConfigError>(m, "ConfigError", usage.ptr());
  py::register_exception<lqk::DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<lqk::UnsupportedModeError>(m, "UnsupportedModeError", PyExc_NotImplementedError);
  py::register_exception<lqk::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("expm", &lqk::expm, py::arg("m"), "Matrix exponential.");

  py::class_<lqk::LQKernel, std::shared_ptr<lqk::LQKernel>>(m, "Kernel")
      .def(py::init([](const Mat& a, const Mat& b, const Mat& r, std::optional<Mat> q, double horizon,
                       int grid_points, const std::string& mode) {
             // pybind11 holds a non-const pointer; the kernel is never mutated.
             return std::const_pointer_cast<lqk::LQKernel>(make_kernel(a, b, r, q, horizon, grid_points, mode));
           }),
           py::arg("A"), py::arg("B"), py::arg("R"), py::arg("Q") = py::none(), py::arg("horizon") = 1.0,
           py::arg("grid_points") = lqk::kDefaultGridPoints, py::arg("mode") = "auto")
      .def_property_readonly("mode",
                             [](const lqk::LQKernel& k) {
                               return k.mode() == lqk::KernelMode::kZeroQ ? "zero_q" : "general_q";
                             })
      .def_property_readonly("horizon", &lqk::LQKernel::horizon)
      .def_property_readonly("state_dim", &lqk::LQKernel::state_dim)
      .def("k", py::overload_cast<double, double>(&lqk::LQKernel::k, py::const_), py::arg("s"), py::arg("t"))
      .def("k0", &lqk::LQKernel::k0, py::arg("s"), py::arg("t"))
      .def("k1", &lqk::LQKernel::k1, py::arg("s"), py::arg("t"))
      .def("gramian", [](const lqk::LQKernel& k) { return k.gramian().gramian; })
      .def("gamma_k", &lqk::LQKernel::gamma_k);

  m.def("preset_json", [](const std::string& name) { return lqk::preset_json(name).dump(); },
        py::arg("name"));
  m.def("preset_names", &lqk::preset_names);
  m.def("run_json", &run_config, py::arg("config_json"));
  m.def("study_json", &study_config, py::arg("config_json"), py::arg("axis"), py::arg("values"));
}
