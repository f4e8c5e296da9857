#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "lqk/linsys.hpp"

namespace lqk {

enum class KernelMode { kZeroQ, kGeneralQ };

/// Per-time quantities from which kernel blocks are assembled.
///
/// ZeroQ: K(s,t) = Phi(s,0) [I + M(min(s,t))] Phi(t,0)^T where
/// M(t) = int_0^t Phi(tau,0)^{-1} B R^{-1} B^T Phi(tau,0)^{-T} dtau.
/// GeneralQ: `xi` is the fundamental matrix of the augmented Hamiltonian
/// system and `column` / `beyond` hold the boundary-matched data needed when
/// this time is used as the second kernel argument.
struct TimeFactors {
  double t = 0.0;
  Mat phi;     // Phi(t, 0)
  Mat m;       // ZeroQ only
  Mat xi;      // GeneralQ only, 3N x 3N
  Mat column;  // GeneralQ only, [X + D0; X], 2N x N
  Mat beyond;  // GeneralQ only, Psi(t)^{-1} Ya(t) Phi(t,0)^T, 2N x N
};

struct GramianResult {
  Mat gramian;
  Vec eigenvalues;  // ascending
  bool invertible = false;
};

/// Evaluator of the LQ matrix-valued kernel of a LinearSystem.
///
/// Per-node factors are computed once at construction on the master grid;
/// off-grid times are handled on demand. All methods are const and safe for
/// concurrent use.
class LQKernel {
 public:
  /// The mode defaults to ZeroQ when Q is identically zero and GeneralQ
  /// otherwise. GeneralQ may be forced for a zero Q.
  explicit LQKernel(LinearSystem sys, int grid_points = kDefaultGridPoints,
                    std::optional<KernelMode> mode = std::nullopt);

  LQKernel(const LQKernel&) = delete;
  LQKernel& operator=(const LQKernel&) = delete;

  const LinearSystem& system() const { return st_.system(); }
  const StateTransition& transition() const { return st_; }
  const UniformGrid& grid() const { return st_.grid(); }
  KernelMode mode() const { return mode_; }
  double horizon() const { return system().horizon(); }
  int state_dim() const { return system().state_dim(); }

  Mat k0(double s, double t) const;
  /// ZeroQ only.
  Mat k1(double s, double t) const;
  Mat k(double s, double t) const;

  TimeFactors factors(double t) const;
  Mat k(const TimeFactors& s, const TimeFactors& t) const;

  /// ZeroQ only: M(t), the input-driven part of K(t,t) pulled back to time 0.
  Mat input_gramian_at(double t) const;

  /// Controllability Gramian K1(T,T) computed with R replaced by Identity.
  GramianResult gramian() const;

  /// max over master-grid nodes of sqrt(lambda_max(K(t,t))). Computed once.
  double gamma_k() const;

  /// || K1(T,T) (grad_g(K1(T,T) p_T) + p_T) ||. ZeroQ only.
  double transversality_check(const std::function<Vec(const Vec&)>& grad_g,
                              const Vec& p_T) const;

  /// Condition number estimate of the boundary matching matrix (GeneralQ),
  /// 1 in ZeroQ mode.
  double matching_condition() const { return matching_cond_; }

 private:
  Mat cumulative_m_between(int node, double t) const;
  Mat van_loan_m(double t) const;
  Mat xi_at(double t) const;

  StateTransition st_;
  KernelMode mode_;
  std::vector<Mat> m_nodes_;   // ZeroQ
  std::vector<Mat> xi_nodes_;  // GeneralQ
  std::optional<Mat> van_loan_generator_;
  std::optional<Mat> hamiltonian_generator_;
  Mat phi_T_;
  Mat xi_T_;
  Eigen::PartialPivLU<Mat> matching_lu_;
  double matching_cond_ = 1.0;

  mutable std::once_flag gamma_once_;
  mutable double gamma_ = 0.0;
};

/// f = sum_m K(., t_m) p_m.
class RepresenterFunction {
 public:
  explicit RepresenterFunction(std::shared_ptr<const LQKernel> kernel);
  RepresenterFunction(std::shared_ptr<const LQKernel> kernel, std::vector<double> times,
                      std::vector<Vec> coefficients);

  void add(double t, Vec p);

  const std::shared_ptr<const LQKernel>& kernel() const { return kernel_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Vec>& coefficients() const { return coeffs_; }
  std::size_t size() const { return times_.size(); }

  Vec eval(double t) const;
  /// u(s) = sum_m U_{t_m}(s) p_m. At an atom time the atom is included, i.e.
  /// the left limit is returned. ZeroQ only.
  Vec control_of(double s) const;
  /// Right limit of control_of at s.
  Vec control_right(double s) const;
  double inner(const RepresenterFunction& other) const;
  double norm() const;

  /// eval() at many times.
  std::vector<Vec> eval_many(std::span<const double> times) const;
  /// eval() at times whose kernel factors are already known.
  std::vector<Vec> eval_at(std::span<const TimeFactors> points) const;
  /// control_of() (or its right limit) at many times. ZeroQ only.
  std::vector<Vec> control_many(std::span<const double> times, bool right_limit) const;

 private:
  Vec control_impl(double s, bool include_at_s) const;

  std::shared_ptr<const LQKernel> kernel_;
  std::vector<double> times_;
  std::vector<Vec> coeffs_;
};

/// CSV with columns s, t, k_1_1, k_1_2, ..., k_N_N (row-major blocks) for
/// every ordered pair of the given times.
void write_kernel_table(std::ostream& out, const LQKernel& kernel, std::span<const double> times);

}  // namespace lqk
