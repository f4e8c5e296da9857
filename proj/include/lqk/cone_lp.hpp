#pragma once

#include <string>
#include <vector>

#include "lqk/linsys.hpp"

namespace lqk {

/// Cone K = R_+^l x Q^{q_1} x ... x Q^{q_k}, with
/// Q^q = {(u0, u1) in R x R^{q-1} : u0 >= ||u1||}.
struct ConeDims {
  int l = 0;
  std::vector<int> q;

  int size() const;
  /// l + number of second-order cones.
  int degree() const;
};

/// minimize c^T x  subject to  G x + s = h, A x = b, s in K.
struct ConeProblem {
  Vec c;
  Mat G;
  Vec h;
  ConeDims dims;
  Mat A;
  Vec b;
};

enum class ConeStatus { kOptimal, kMaxIter, kPrimalInfeasible, kDualInfeasible, kNumericalError };

std::string to_string(ConeStatus status);

struct ConeSettings {
  double tol = 1e-8;
  int max_iter = 200;
  int refinement_steps = 2;
  /// When the iteration stalls (numerical trouble or the iteration limit),
  /// the best iterate is still accepted at this looser tolerance and the
  /// result flagged inaccurate.
  double tol_inaccurate = 1e-6;
  /// One progress line per iteration on stderr.
  bool verbose = false;
};

struct ConeResult {
  ConeStatus status = ConeStatus::kNumericalError;
  Vec x, y, z, s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  /// Relative primal and dual residuals, s^T z, and s^T z / max(1, |pcost|).
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double relative_gap = 0.0;
  /// Residuals of the infeasibility certificates (infinite when not applicable).
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  int iterations = 0;
  bool inaccurate = false;
};

/// Dense primal-dual interior-point method on the homogeneous self-dual
/// embedding with Nesterov-Todd scaling and Mehrotra predictor-corrector
/// steps. In the infeasible cases (y, z) or x hold normalized certificates.
ConeResult solve_cone(const ConeProblem& problem, const ConeSettings& settings = {});

namespace cone {

// Exposed for testing.

/// Nesterov-Todd scaling of one second-order cone block: W = beta (2 v v^T - J).
struct SocScaling {
  double beta = 1.0;
  Vec v;
};

SocScaling soc_scaling(const Vec& s, const Vec& z);
Vec soc_apply(const SocScaling& w, const Vec& x);
Vec soc_apply_inverse(const SocScaling& w, const Vec& x);
/// Jordan product u o v in one second-order cone.
Vec soc_product(const Vec& u, const Vec& v);
/// Solves lambda o x = r in one second-order cone.
Vec soc_divide(const Vec& lambda, const Vec& r);
/// Largest alpha >= 0 with u + alpha d in the cone (infinity if unbounded).
double soc_max_step(const Vec& u, const Vec& d);

}  // namespace cone

}  // namespace lqk
