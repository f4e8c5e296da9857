#include "lqk/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace lqk {

namespace {

using nlohmann::json;

void allow_only(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown field '" + key + "' in " + where);
  }
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + " must be an integer");
  return j.get<int>();
}

Vec vector_of(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = number(j[i], where);
  }
  return v;
}

std::vector<double> doubles(const json& j, const std::string& where) {
  const Vec v = vector_of(j, where);
  return {v.data(), v.data() + v.size()};
}

// A number is 1x1, a flat array a column, nested arrays a row-major matrix.
Mat matrix_of(const json& j, const std::string& where) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a number or a non-empty array");
  if (!j.front().is_array()) return vector_of(j, where);
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ConfigError(where + " has rows of unequal length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], where);
  }
  return m;
}

MatrixFunction function_of(const json& j, const std::string& where) {
  if (j.is_object()) {
    allow_only(j, where, {"times", "values"});
    if (!j.contains("times") || !j.contains("values")) {
      throw ConfigError(where + " needs both 'times' and 'values'");
    }
    std::vector<double> times = doubles(j.at("times"), where + ".times");
    const auto& vals = j.at("values");
    if (!vals.is_array() || vals.size() != times.size()) {
      throw ConfigError(where + ".values needs one entry per time");
    }
    std::vector<Mat> values;
    for (const auto& v : vals) values.push_back(matrix_of(v, where + ".values"));
    try {
      return MatrixFunction::sampled(std::move(times), std::move(values));
    } catch (const UsageError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return MatrixFunction::constant(matrix_of(j, where));
}

IntervalFamily family_of(const json& j, const std::string& where) {
  allow_only(j, where, {"centers", "radii"});
  IntervalFamily fam;
  fam.centers = doubles(j.at("centers"), where + ".centers");
  fam.radii = doubles(j.at("radii"), where + ".radii");
  if (fam.centers.size() != fam.radii.size() || fam.centers.empty()) {
    throw ConfigError(where + " needs matching, non-empty centers and radii");
  }
  return fam;
}

json pendulum_json() {
  return {
      {"name", "pendulum"},
      {"system",
       {{"A", {{0, 1, 0}, {-10, 0, 1}, {0, 0, 0}}},
        {"B", {{0}, {0}, {1}}},
        {"R", {{1e4}}},
        {"horizon", 1.0},
        {"r", 1e4}}},
      {"constraints", {{"C", {{0, -1, 0}, {0, 0, 1}, {0, 0, -1}}}, {"d", {3, 10, 10}}}},
      {"covering", {{"n_points", 200}}},
      {"x0", {0.5, 0, 0}},
      {"loss_points",
       {{{"t", 1.0 / 3.0}, {"direction", {1, 0, 0}}, {"kind", "equality"}, {"value", 0.5}},
        {{"t", 1.0}, {"direction", {1, 0, 0}}, {"kind", "equality"}, {"value", 0.0}},
        {{"t", 1.0}, {"direction", {0, 1, 0}}, {"kind", "linear"}, {"value", -1e6}}}},
      {"eta", {{"study_families", {1, 2}}}},
  };
}

// x(0) = 0 is forced while x <= -1 is imposed on an interval centered at 0.
json infeasible_json() {
  return {
      {"name", "infeasible"},
      {"system", {{"A", 0.0}, {"B", 1.0}, {"R", 1.0}, {"horizon", 1.0}, {"r", 1.0}}},
      {"constraints", {{"C", {{1}}}, {"d", {-1}}}},
      {"covering",
       {{"families", {{{"centers", {0.0, 0.5, 1.0}}, {"radii", {0.25, 0.25, 0.5}}}}}}},
      {"x0", {0.0}},
  };
}

RunConfig parse_resolved(const json& doc) {
  allow_only(doc, "config", {"name", "system", "grid_points", "mode", "constraints", "covering",
                              "x0", "loss_points", "solver", "eta", "dense_factor", "out_dir"});
  RunConfig cfg;
  if (doc.contains("name")) cfg.name = doc.at("name").get<std::string>();

  if (!doc.contains("system")) throw ConfigError("missing 'system'");
  const auto& js = doc.at("system");
  allow_only(js, "system", {"A", "B", "Q", "R", "horizon", "r"});
  if (!js.contains("A") || !js.contains("B")) throw ConfigError("system needs 'A' and 'B'");
  cfg.system.A = function_of(js.at("A"), "system.A");
  cfg.system.B = function_of(js.at("B"), "system.B");
  const auto n = cfg.system.A.rows();
  const auto m = cfg.system.B.cols();
  if (cfg.system.A.cols() != n || cfg.system.B.rows() != n) {
    throw ConfigError("system.A must be N x N and system.B N x M");
  }
  cfg.system.Q = js.contains("Q") ? function_of(js.at("Q"), "system.Q")
                                  : MatrixFunction::constant(Mat::Zero(n, n));
  cfg.system.R = js.contains("R") ? function_of(js.at("R"), "system.R")
                                  : MatrixFunction::constant(Mat::Identity(m, m));
  if (cfg.system.Q.rows() != n || cfg.system.Q.cols() != n) throw ConfigError("system.Q must be N x N");
  if (cfg.system.R.rows() != m || cfg.system.R.cols() != m) throw ConfigError("system.R must be M x M");
  cfg.system.horizon = js.contains("horizon") ? number(js.at("horizon"), "system.horizon") : 1.0;
  if (!(cfg.system.horizon > 0.0)) throw ConfigError("system.horizon must be positive");
  cfg.system.declared_r = js.contains("r") ? number(js.at("r"), "system.r") : 0.0;

  if (doc.contains("grid_points")) {
    cfg.grid_points = integer(doc.at("grid_points"), "grid_points");
    if (cfg.grid_points < 3 || cfg.grid_points % 2 == 0) {
      throw ConfigError("grid_points must be odd and at least 3");
    }
  }
  if (doc.contains("mode")) {
    const auto mode = doc.at("mode").get<std::string>();
    if (mode == "zero_q") cfg.mode = KernelMode::kZeroQ;
    else if (mode == "general_q") cfg.mode = KernelMode::kGeneralQ;
    else if (mode != "auto") throw ConfigError("mode must be 'auto', 'zero_q' or 'general_q'");
  }

  if (doc.contains("constraints")) {
    const auto& jc = doc.at("constraints");
    allow_only(jc, "constraints", {"C", "d"});
    if (!jc.contains("C") || !jc.contains("d")) throw ConfigError("constraints need 'C' and 'd'");
    MatrixFunction c = function_of(jc.at("C"), "constraints.C");
    MatrixFunction d = function_of(jc.at("d"), "constraints.d");
    if (c.cols() != n) throw ConfigError("constraints.C must have N columns");
    try {
      cfg.constraints = ConstraintSpec(std::move(c), std::move(d));
    } catch (const UsageError& e) {
      throw ConfigError(std::string("constraints: ") + e.what());
    }
  } else {
    cfg.constraints = ConstraintSpec(MatrixFunction::constant(Mat::Zero(0, n)),
                                     MatrixFunction::constant(Mat::Zero(0, 1)));
  }

  if (doc.contains("covering")) {
    const auto& jc = doc.at("covering");
    allow_only(jc, "covering", {"n_points", "zero_radius", "families"});
    if (jc.contains("n_points")) {
      cfg.covering.n_points = integer(jc.at("n_points"), "covering.n_points");
      if (cfg.covering.n_points < 1) throw ConfigError("covering.n_points must be positive");
    }
    if (jc.contains("zero_radius")) cfg.covering.zero_radius = jc.at("zero_radius").get<bool>();
    if (jc.contains("families")) {
      const auto& fams = jc.at("families");
      if (!fams.is_array()) throw ConfigError("covering.families must be an array");
      for (std::size_t k = 0; k < fams.size(); ++k) {
        cfg.covering.families.push_back(
            family_of(fams[k], "covering.families[" + std::to_string(k) + "]"));
      }
    }
    if ((cfg.covering.n_points > 0) == !cfg.covering.families.empty()) {
      throw ConfigError("covering needs exactly one of 'n_points' and 'families'");
    }
  } else if (cfg.constraints.count() > 0) {
    throw ConfigError("constraints need a covering");
  }

  if (doc.contains("x0")) {
    cfg.x0 = vector_of(doc.at("x0"), "x0");
    if (cfg.x0->size() != n) throw ConfigError("x0 must have N entries");
  }
  if (doc.contains("loss_points")) {
    const auto& jl = doc.at("loss_points");
    if (!jl.is_array()) throw ConfigError("loss_points must be an array");
    for (std::size_t k = 0; k < jl.size(); ++k) {
      const std::string where = "loss_points[" + std::to_string(k) + "]";
      const auto& p = jl[k];
      allow_only(p, where, {"t", "direction", "kind", "value"});
      LossPoint lp;
      lp.t = number(p.at("t"), where + ".t");
      lp.direction = vector_of(p.at("direction"), where + ".direction");
      if (lp.direction.size() != n) throw ConfigError(where + ".direction must have N entries");
      const auto kind = p.value("kind", std::string("equality"));
      if (kind == "equality") lp.kind = LossKind::kEquality;
      else if (kind == "linear") lp.kind = LossKind::kLinearCost;
      else throw ConfigError(where + ".kind must be 'equality' or 'linear'");
      lp.value = number(p.at("value"), where + ".value");
      if (lp.t < 0.0 || lp.t > cfg.system.horizon) throw ConfigError(where + ".t outside [0, T]");
      cfg.loss_points.push_back(std::move(lp));
    }
  }

  if (doc.contains("solver")) {
    const auto& jo = doc.at("solver");
    allow_only(jo, "solver", {"tol", "max_iter", "lambda_cond"});
    if (jo.contains("tol")) cfg.solver.tol = number(jo.at("tol"), "solver.tol");
    if (jo.contains("max_iter")) cfg.solver.max_iter = integer(jo.at("max_iter"), "solver.max_iter");
    if (jo.contains("lambda_cond") && !jo.at("lambda_cond").is_null()) {
      cfg.solver.lambda_cond = number(jo.at("lambda_cond"), "solver.lambda_cond");
      if (cfg.solver.lambda_cond < 0.0) throw ConfigError("solver.lambda_cond must be >= 0");
    }
    if (!(cfg.solver.tol > 0.0) || cfg.solver.max_iter < 1) {
      throw ConfigError("solver.tol must be positive and solver.max_iter at least 1");
    }
  }

  if (doc.contains("eta")) {
    const auto& je = doc.at("eta");
    allow_only(je, "eta", {"n_samples", "safety_factor", "scale", "override", "study_families"});
    if (je.contains("n_samples")) {
      cfg.eta.n_samples = integer(je.at("n_samples"), "eta.n_samples");
      if (cfg.eta.n_samples < 2) throw ConfigError("eta.n_samples must be at least 2");
    }
    if (je.contains("safety_factor")) {
      cfg.eta.safety_factor = number(je.at("safety_factor"), "eta.safety_factor");
    }
    const auto p = static_cast<std::size_t>(cfg.constraints.count());
    if (je.contains("scale")) {
      cfg.eta.scale = doubles(je.at("scale"), "eta.scale");
      if (cfg.eta.scale.size() != p) throw ConfigError("eta.scale needs one entry per constraint");
    }
    if (je.contains("override")) {
      cfg.eta.override_values = doubles(je.at("override"), "eta.override");
      if (cfg.eta.override_values.size() != p) {
        throw ConfigError("eta.override needs one entry per constraint");
      }
    }
    if (je.contains("study_families")) {
      for (const auto& v : je.at("study_families")) {
        const int i = integer(v, "eta.study_families");
        if (i < 0 || i >= static_cast<int>(p)) throw ConfigError("eta.study_families index out of range");
        cfg.eta.study_families.push_back(i);
      }
    }
  }

  if (doc.contains("dense_factor")) {
    cfg.dense_factor = integer(doc.at("dense_factor"), "dense_factor");
    if (cfg.dense_factor < 1) throw ConfigError("dense_factor must be at least 1");
  }
  if (doc.contains("out_dir")) cfg.out_dir = doc.at("out_dir").get<std::string>();
  return cfg;
}

}  // namespace

Covering CoveringConfig::build(double horizon, int constraints) const {
  if (!families.empty()) {
    Covering cov{families};
    cov.check(horizon, constraints, true);
    return cov;
  }
  return zero_radius ? build_point_covering(horizon, n_points, constraints)
                     : build_uniform_covering(horizon, n_points, constraints);
}

TighteningOptions EtaConfig::options() const {
  TighteningOptions opt;
  opt.n_samples = n_samples;
  opt.safety_factor = safety_factor;
  opt.eta_scale = scale;
  opt.eta_override = override_values;
  return opt;
}

std::vector<std::string> preset_names() { return {"pendulum", "infeasible"}; }

nlohmann::json preset_json(const std::string& name) {
  if (name == "pendulum") return pendulum_json();
  if (name == "infeasible") return infeasible_json();
  throw ConfigError("unknown preset '" + name + "'");
}

RunConfig parse_config(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (doc.contains("preset")) {
      json base = preset_json(doc.at("preset").get<std::string>());
      json patch = doc;
      patch.erase("preset");
      base.merge_patch(patch);
      return parse_resolved(base);
    }
    return parse_resolved(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace lqk
