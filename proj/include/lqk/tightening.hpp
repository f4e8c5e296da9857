#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "lqk/kernel.hpp"

namespace lqk {

/// Affine state constraints C(t) x(t) <= d(t), one per row of C.
class ConstraintSpec {
 public:
  ConstraintSpec() = default;
  ConstraintSpec(MatrixFunction c, MatrixFunction d);

  int count() const { return static_cast<int>(c_.rows()); }
  int state_dim() const { return static_cast<int>(c_.cols()); }
  const MatrixFunction& C() const { return c_; }
  const MatrixFunction& d() const { return d_; }

  /// c_i(t), the i-th row of C(t) as a column vector.
  Vec row(int i, double t) const;
  /// d_i(t).
  double bound(int i, double t) const;

 private:
  MatrixFunction c_ = MatrixFunction::constant(Mat::Zero(0, 0));
  MatrixFunction d_ = MatrixFunction::constant(Mat::Zero(0, 1));
};

/// Centers and radii of the intervals [t_m - delta_m, t_m + delta_m].
struct IntervalFamily {
  std::vector<double> centers;
  std::vector<double> radii;

  std::size_t size() const { return centers.size(); }
  double max_radius() const;
};

/// One interval family per constraint.
struct Covering {
  std::vector<IntervalFamily> families;

  /// Every family covers [0, T]. Radii may be zero only when `allow_zero`.
  bool covers(double horizon, bool allow_zero = false) const;
  void check(double horizon, int constraints, bool allow_zero = false) const;
};

/// Centers (m - 1/2) T / N_P and radii T / (2 N_P), m = 1..N_P, shared by
/// `constraints` families.
Covering build_uniform_covering(double horizon, int n_points, int constraints = 1);
/// Same centers with all radii zero (diagnostic: no tightening).
Covering build_point_covering(double horizon, int n_points, int constraints = 1);

inline constexpr int kDefaultSupSamples = 33;

/// Sampled sup over s in [t_m - delta, t_m + delta] ∩ [0, T] of
/// ||K(., t_m) c(t_m) - K(., s) c(s)||_K.
double eta(const LQKernel& kernel, const ConstraintSpec& spec, int i, double t_m, double delta,
           int n_samples = kDefaultSupSamples);
/// Sampled sup of |d_i(t) - d_i(s)| over the same interval.
double omega(const ConstraintSpec& spec, int i, double t, double delta, double horizon,
             int n_samples = kDefaultSupSamples);
/// Sampled inf of d_i(s) over the same interval.
double d_inf(const ConstraintSpec& spec, int i, double t_m, double delta, double horizon,
             int n_samples = kDefaultSupSamples);

struct TighteningOptions {
  int n_samples = kDefaultSupSamples;
  /// Multiplies every computed eta.
  double safety_factor = 1.0;
  /// Per-constraint multiplier applied after the safety factor; empty = all 1.
  std::vector<double> eta_scale;
  /// Per-constraint fixed eta; negative entries mean "compute". Empty = none.
  std::vector<double> eta_override;
};

struct TightenedRow {
  int constraint = 0;
  int index = 0;
  double t = 0.0;
  double delta = 0.0;
  double eta = 0.0;
  /// eta as computed, before scaling or overrides.
  double eta_computed = 0.0;
  double d_inf = 0.0;
  Vec c;
};

struct TightenedConstraints {
  std::vector<TightenedRow> rows;  // ordered by (constraint, index)
};

TightenedConstraints tighten(const LQKernel& kernel, const ConstraintSpec& spec,
                             const Covering& covering, const TighteningOptions& options = {});

/// CSV with columns i, m, t_m, delta_m, eta, d_inf (1-based i and m).
void write_eta_table(std::ostream& out, const TightenedConstraints& tightened);

enum class ConstraintSet { kV0, kVdeltaFin, kVdeltaInf, kVeps };

struct MembershipResult {
  bool member = false;
  /// Smallest slack over all checked inequalities (>= -tol for members).
  double worst_margin = 0.0;
  int worst_constraint = -1;
  double worst_time = 0.0;
};

/// Membership tests for the constraint-set family.
///
/// V0 and Veps are checked on a dense lattice (the master grid refined
/// `dense_factor` times, plus all covering centers). Vdelta,fin is checked
/// at the covering centers with the tightened rows. Vdelta,inf is checked on
/// the lattice with delta_i = max_m delta_{i,m}; eta(delta, t) and
/// omega(delta, t) are sampled on lattice points inside the window, and at
/// covering centers they are also bounded below by the finite-covering
/// values, so the inclusion Vdelta,inf ⊆ Vdelta,fin holds exactly on the
/// sampled data. Tables depend only on the kernel and constraints and are
/// built once.
class MembershipChecker {
 public:
  MembershipChecker(std::shared_ptr<const LQKernel> kernel, ConstraintSpec spec,
                    Covering covering, TightenedConstraints tightened, int dense_factor = 10,
                    int max_window_samples = 129);

  const std::vector<double>& lattice() const { return lattice_; }
  /// f evaluated on the lattice.
  std::vector<Vec> trajectory_on_lattice(const RepresenterFunction& f) const;

  MembershipResult check(const RepresenterFunction& f, double norm, ConstraintSet which,
                         const Vec& eps = Vec(), double tol = 1e-9) const;
  /// Same check with the trajectory already evaluated on the lattice.
  MembershipResult check_values(const std::vector<Vec>& values, double norm, ConstraintSet which,
                                const Vec& eps = Vec(), double tol = 1e-9) const;

  /// Per constraint, max over the lattice of eta_i(delta_i, t) y0 + omega_i(delta_i, t):
  /// any eps at least this large satisfies the hypothesis of the nested-set
  /// inclusion Veps ∩ y0 B_K ⊆ Vdelta,inf.
  Vec epsilon_bound(double y0) const;

  const std::vector<std::vector<double>>& eta_inf() const { return eta_inf_; }
  const std::vector<std::vector<double>>& omega_inf() const { return omega_inf_; }

 private:
  std::shared_ptr<const LQKernel> kernel_;
  ConstraintSpec spec_;
  Covering covering_;
  TightenedConstraints tightened_;
  std::vector<double> lattice_;
  std::vector<TimeFactors> lattice_factors_;
  std::vector<std::vector<double>> eta_inf_;    // [i][j]
  std::vector<std::vector<double>> omega_inf_;  // [i][j]
};

MembershipResult membership(std::shared_ptr<const LQKernel> kernel, const RepresenterFunction& f,
                            double norm, const ConstraintSpec& spec, const Covering& covering,
                            const TightenedConstraints& tightened, ConstraintSet which,
                            int dense_factor = 10, const Vec& eps = Vec());

}  // namespace lqk
