#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lqk/errors.hpp"

namespace lqk {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Default number of nodes of the master time grid over [0, T].
inline constexpr int kDefaultGridPoints = 2001;

/// A matrix-valued function of time on [0, T].
///
/// Three representations are supported: a constant matrix, samples on a
/// strictly increasing time grid with piecewise-linear interpolation, and an
/// arbitrary callable. Outside the sample range, sampled functions hold their
/// end values.
class MatrixFunction {
 public:
  enum class Kind { kConstant, kSampled, kCallable };

  MatrixFunction() = default;

  static MatrixFunction constant(Mat value);
  static MatrixFunction sampled(std::vector<double> times, std::vector<Mat> values);
  static MatrixFunction callable(Eigen::Index rows, Eigen::Index cols,
                                 std::function<Mat(double)> fn);

  Mat operator()(double t) const;

  Kind kind() const { return kind_; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  bool is_constant() const { return kind_ == Kind::kConstant; }
  /// True for a constant function whose value is exactly zero.
  bool is_zero() const;
  const Mat& constant_value() const;
  const std::vector<double>& sample_times() const { return times_; }

 private:
  Kind kind_ = Kind::kConstant;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  Mat value_;
  std::vector<double> times_;
  std::vector<Mat> values_;
  std::function<Mat(double)> fn_;
};

/// Uniform grid t_i = i * T / (n - 1), i = 0..n-1.
class UniformGrid {
 public:
  UniformGrid(double horizon, int points);

  double horizon() const { return horizon_; }
  int size() const { return points_; }
  double step() const { return step_; }
  double operator[](int i) const;
  int nearest(double t) const;
  /// True when t coincides with a node (to 1e-12 relative); the node index is
  /// written to `index` if non-null.
  bool is_node(double t, int* index = nullptr) const;
  /// Nodes of the grid refined `factor` times (factor >= 1).
  std::vector<double> refined(int factor) const;

 private:
  double horizon_;
  int points_;
  double step_;
};

/// Dynamics and cost weights: x' = A x + B u, cost x'Qx + u'Ru on [0, T].
class LinearSystem {
 public:
  LinearSystem(MatrixFunction a, MatrixFunction b, MatrixFunction q, MatrixFunction r,
               double horizon, double declared_r = 0.0);

  const MatrixFunction& A() const { return a_; }
  const MatrixFunction& B() const { return b_; }
  const MatrixFunction& Q() const { return q_; }
  const MatrixFunction& R() const { return r_; }
  double horizon() const { return horizon_; }
  /// Lower bound r with R(t) >= r Id declared by the user; 0 when undeclared.
  double declared_r() const { return declared_r_; }
  int state_dim() const { return static_cast<int>(a_.rows()); }
  int input_dim() const { return static_cast<int>(b_.cols()); }

  bool zero_state_cost() const { return q_.is_zero(); }
  /// A, B and R are all constant.
  bool time_invariant() const;

  LinearSystem with_R(MatrixFunction r) const;
  LinearSystem with_Q(MatrixFunction q) const;

  void check_time(double t) const;

 private:
  MatrixFunction a_, b_, q_, r_;
  double horizon_;
  double declared_r_;
};

/// Numerical check of the standing assumptions on a LinearSystem.
struct ValidationReport {
  bool ok = true;
  double min_r_eigenvalue = 0.0;
  double min_q_eigenvalue = 0.0;
  double max_q_asymmetry = 0.0;
  std::vector<std::string> failures;
};

ValidationReport validate(const LinearSystem& sys, const MatrixFunction* c = nullptr,
                          const MatrixFunction* d = nullptr, int samples = 201);

/// Cached state-transition matrices Phi_A(t, 0) on a master grid.
///
/// Time-invariant A uses the matrix exponential; otherwise Phi is integrated
/// with fixed-step RK4 between nodes and off-grid times take one extra RK4
/// step from the nearest node. Read-only after construction.
class StateTransition {
 public:
  explicit StateTransition(LinearSystem sys, int grid_points = kDefaultGridPoints);

  const LinearSystem& system() const { return sys_; }
  const UniformGrid& grid() const { return grid_; }
  bool exact() const { return exact_; }

  /// Phi_A(t, s).
  Mat operator()(double t, double s) const;
  /// Phi_A(t, 0).
  Mat from_origin(double t) const;
  /// Phi_A(t, 0)^{-1}.
  Mat from_origin_inverse(double t) const;

 private:
  LinearSystem sys_;
  UniformGrid grid_;
  bool exact_;
  std::vector<Mat> phi_;
  std::vector<Mat> phi_inv_;
};

/// Piecewise-linear control samples. Repeated times encode a jump: the first
/// entry is the left limit and the last the right limit.
class SampledControl {
 public:
  SampledControl(std::vector<double> times, std::vector<Vec> values);
  static SampledControl constant(const Vec& value, double horizon);

  /// Right-continuous evaluation.
  Vec operator()(double t) const;
  const std::vector<double>& times() const { return times_; }
  const std::vector<Vec>& values() const { return values_; }

 private:
  std::vector<double> times_;
  std::vector<Vec> values_;
};

/// x(t) = Phi(t,0) x0 + int_0^t Phi(t,tau) B(tau) u(tau) dtau.
Vec propagate(const StateTransition& st, const Vec& x0, const SampledControl& u, double t);

/// propagate() at several nondecreasing times in one sweep.
std::vector<Vec> propagate(const StateTransition& st, const Vec& x0, const SampledControl& u,
                           std::span<const double> times);

/// Matrix exponential by scaling and squaring.
Mat expm(const Mat& m);

}  // namespace lqk
