#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lqk/kernel.hpp"
#include "lqk/socp.hpp"
#include "lqk/tightening.hpp"

namespace lqk {

struct SystemConfig {
  MatrixFunction A, B, Q, R;
  double horizon = 1.0;
  double declared_r = 0.0;

  LinearSystem make() const { return LinearSystem(A, B, Q, R, horizon, declared_r); }
};

/// Either a uniform covering with `n_points` centers (radii zero when
/// `zero_radius`), or explicit interval families.
struct CoveringConfig {
  int n_points = 0;
  bool zero_radius = false;
  std::vector<IntervalFamily> families;

  Covering build(double horizon, int constraints) const;
};

struct EtaConfig {
  int n_samples = kDefaultSupSamples;
  double safety_factor = 1.0;
  std::vector<double> scale;
  std::vector<double> override_values;
  /// Zero-based constraint indices whose eta the eta-scale study multiplies.
  std::vector<int> study_families;

  TighteningOptions options() const;
};

struct SolverConfig {
  double tol = 1e-8;
  int max_iter = 200;
  /// Negative selects the default.
  double lambda_cond = -1.0;
};

struct RunConfig {
  std::string name;
  SystemConfig system;
  int grid_points = kDefaultGridPoints;
  std::optional<KernelMode> mode;
  ConstraintSpec constraints;
  CoveringConfig covering;
  std::optional<Vec> x0;
  std::vector<LossPoint> loss_points;
  SolverConfig solver;
  EtaConfig eta;
  int dense_factor = 10;
  std::string out_dir = ".";
};

/// Parses a configuration document. A "preset" member selects a built-in
/// configuration which the remaining members patch (RFC 7396 merge).
/// Unknown members are rejected. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

std::vector<std::string> preset_names();
/// The JSON document of a built-in configuration. Throws ConfigError.
nlohmann::json preset_json(const std::string& name);

}  // namespace lqk
