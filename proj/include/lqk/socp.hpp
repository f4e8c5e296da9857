#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lqk/cone_lp.hpp"
#include "lqk/kernel.hpp"
#include "lqk/tightening.hpp"

namespace lqk {

enum class LossKind { kEquality, kLinearCost };

/// A pointwise term c^T x(t): either the equality c^T x(t) = value or the
/// objective term value * c^T x(t).
struct LossPoint {
  double t = 0.0;
  Vec direction;
  LossKind kind = LossKind::kEquality;
  double value = 0.0;
};

struct ProblemSpec {
  ConstraintSpec constraints;
  std::vector<LossPoint> loss_points;
  /// Imposed as N equalities at t = 0 when set.
  std::optional<Vec> x0;
  /// Negative selects the default 1e-10 * trace(G) / dim(G).
  double lambda_cond = -1.0;
};

/// Atom K(., t) c of the finite representation.
struct BasisAtom {
  double t = 0.0;
  Vec c;
};

struct EqualityRow {
  Vec a;
  double b = 0.0;
};

/// eta * z + a^T alpha <= b.
struct SocRow {
  double eta = 0.0;
  Vec a;
  double b = 0.0;
  int constraint = 0;
  int index = 0;
};

/// minimize linear^T alpha + alpha^T (G + lambda_cond I) alpha
/// subject to the equality rows and eta ||alpha||_G + a^T alpha <= b.
struct SOCProgram {
  std::vector<BasisAtom> basis;
  Mat gram;
  std::vector<EqualityRow> equalities;
  std::vector<SocRow> soc_rows;
  Vec linear;
  double lambda_cond = 0.0;

  int size() const { return static_cast<int>(linear.size()); }
};

/// Row [c^T K(t, t_b) c_b]_b of point evaluations against the basis.
Vec evaluation_row(const LQKernel& kernel, const std::vector<BasisAtom>& basis, double t,
                   const Vec& c);

SOCProgram assemble(const ProblemSpec& spec, const LQKernel& kernel,
                    const TightenedConstraints& tightened);

enum class SolveStatus { kOptimal, kMaxIter, kInfeasible, kUnbounded, kNumericalError };

std::string to_string(SolveStatus status);

struct Solution {
  SolveStatus status = SolveStatus::kNumericalError;
  Vec alpha;
  /// sqrt(alpha^T G alpha).
  double z = 0.0;
  /// Epigraph variable of the conic model (bounds sqrt(alpha^T (G + lambda I) alpha)).
  double z_model = 0.0;
  /// linear^T alpha + alpha^T G alpha + lambda ||alpha||^2.
  double objective = 0.0;
  double linear_cost = 0.0;
  double lambda_cond = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double infeasibility_residual = 0.0;
  int iterations = 0;
  /// Status accepted at the solver's looser fallback tolerance.
  bool inaccurate = false;
  /// The interior-point iterate was refined by Newton steps on the KKT
  /// system of its active set.
  bool polished = false;
  double wall_time = 0.0;
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 200;
  bool verbose = false;
  /// Refine Optimal solutions on their active set (see solve()).
  bool polish = true;
};

/// Conic reformulation with the Cholesky factor G + lambda I = L L^T and
/// beta = L^T alpha: equality and SOC rows act on beta through L^{-1} a,
/// ||beta|| <= z, and a rotated cone bounds z^2 by an epigraph variable.
ConeProblem to_cone(const SOCProgram& prog, Mat* factor = nullptr, double* lambda_used = nullptr);

/// Interior-point solve of the conic model. The epigraph form only pins alpha
/// to about sqrt(tol), so Optimal solutions are then polished: rows whose
/// dual exceeds their slack are taken as active and Newton's method is run on
/// the resulting KKT system in the whitened variables. The polished point is
/// kept only if it is primal feasible with nonnegative multipliers.
Solution solve(const SOCProgram& prog, const SolveOptions& options = {});

/// JSON document {n_vars, objective: {quadratic_factor_L, linear}, equalities,
/// soc_rows, basis, lambda_cond}; numbers printed with 17 significant digits.
void export_conic(const SOCProgram& prog, std::ostream& out);
void export_conic(const SOCProgram& prog, const std::string& path);
SOCProgram import_conic(std::istream& in);
SOCProgram import_conic_file(const std::string& path);

}  // namespace lqk
