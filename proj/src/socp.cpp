#include "lqk/socp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>

#include <nlohmann/json.hpp>

#include "lqk/detail/format.hpp"
#include "lqk/detail/parallel.hpp"

namespace lqk {

namespace {

constexpr double kTimeTol = 1e-12;
constexpr double kCollinearTol = 1e-12;

bool collinear(const Vec& a, const Vec& b) {
  const double na = a.norm();
  const double nb = b.norm();
  return std::abs(std::abs(a.dot(b)) - na * nb) <= kCollinearTol * na * nb;
}

// Evaluations c^T K(t, t_b) c_b against a fixed basis, with the basis factors
// computed once.
class RowBuilder {
 public:
  RowBuilder(const LQKernel& kernel, const std::vector<BasisAtom>& basis)
      : kernel_(kernel), basis_(basis), factors_(basis.size()) {
    detail::parallel_for(static_cast<int>(basis.size()), [&](int b) {
      factors_[static_cast<std::size_t>(b)] = kernel.factors(basis[static_cast<std::size_t>(b)].t);
    });
    if (kernel.mode() == KernelMode::kZeroQ) {
      g_.resize(basis.size());
      mg_.resize(basis.size());
      for (std::size_t b = 0; b < basis.size(); ++b) {
        g_[b] = factors_[b].phi.transpose() * basis[b].c;
        mg_[b] = factors_[b].m * g_[b];
      }
    }
  }

  Vec row(double t, const Vec& c) const { return row(kernel_.factors(t), c); }

  Vec row(const TimeFactors& f, const Vec& c) const {
    const auto nb = basis_.size();
    Vec out(static_cast<Eigen::Index>(nb));
    if (kernel_.mode() == KernelMode::kZeroQ) {
      const Vec v = f.phi.transpose() * c;
      const Vec mv = f.m * v;
      for (std::size_t b = 0; b < nb; ++b) {
        const double base = v.dot(g_[b]);
        out(static_cast<Eigen::Index>(b)) =
            base + (f.t <= factors_[b].t ? mv.dot(g_[b]) : v.dot(mg_[b]));
      }
      return out;
    }
    for (std::size_t b = 0; b < nb; ++b) {
      out(static_cast<Eigen::Index>(b)) = c.dot(kernel_.k(f, factors_[b]) * basis_[b].c);
    }
    return out;
  }

  const TimeFactors& factors(std::size_t b) const { return factors_[b]; }

 private:
  const LQKernel& kernel_;
  const std::vector<BasisAtom>& basis_;
  std::vector<TimeFactors> factors_;
  std::vector<Vec> g_;
  std::vector<Vec> mg_;
};

struct Point {
  double t;
  Vec c;
};

}  // namespace

Vec evaluation_row(const LQKernel& kernel, const std::vector<BasisAtom>& basis, double t,
                   const Vec& c) {
  kernel.system().check_time(t);
  const RowBuilder rb(kernel, basis);
  return rb.row(t, c);
}

SOCProgram assemble(const ProblemSpec& spec, const LQKernel& kernel,
                    const TightenedConstraints& tightened) {
  const int n = kernel.state_dim();
  const double T = kernel.horizon();
  const double ttol = kTimeTol * std::max(1.0, T);

  std::vector<LossPoint> loss;
  if (spec.x0) {
    if (spec.x0->size() != n) throw UsageError("x0 has the wrong dimension");
    for (int k = 0; k < n; ++k) {
      loss.push_back({0.0, Vec::Unit(n, k), LossKind::kEquality, (*spec.x0)(k)});
    }
  }
  loss.insert(loss.end(), spec.loss_points.begin(), spec.loss_points.end());

  auto check_point = [&](double t, const Vec& c) {
    if (!(t >= -ttol && t <= T + ttol)) throw UsageError("basis time outside [0, T]");
    if (c.size() != n) throw UsageError("direction has the wrong dimension");
    if (!c.allFinite()) throw UsageError("direction has non-finite entries");
  };

  SOCProgram prog;
  auto add_atom = [&](double t, const Vec& c) {
    if (c.norm() == 0.0) return;
    for (const auto& a : prog.basis) {
      if (std::abs(a.t - t) <= ttol && collinear(a.c, c)) return;
    }
    prog.basis.push_back({std::clamp(t, 0.0, T), c});
  };
  for (const auto& lp : loss) {
    check_point(lp.t, lp.direction);
    add_atom(lp.t, lp.direction);
  }
  for (const auto& row : tightened.rows) {
    check_point(row.t, row.c);
    add_atom(row.t, row.c);
  }
  if (prog.basis.empty()) throw UsageError("empty basis: no loss points or constraints");

  const RowBuilder rb(kernel, prog.basis);
  const auto nb = static_cast<Eigen::Index>(prog.basis.size());
  prog.gram.resize(nb, nb);
  detail::parallel_for(static_cast<int>(nb), [&](int i) {
    prog.gram.row(i) = rb.row(rb.factors(static_cast<std::size_t>(i)),
                              prog.basis[static_cast<std::size_t>(i)].c)
                           .transpose();
  });
  prog.gram = (0.5 * (prog.gram + prog.gram.transpose())).eval();

  prog.linear = Vec::Zero(nb);
  for (const auto& lp : loss) {
    const Vec a = rb.row(std::clamp(lp.t, 0.0, T), lp.direction);
    if (lp.kind == LossKind::kEquality) {
      prog.equalities.push_back({a, lp.value});
    } else {
      prog.linear += lp.value * a;
    }
  }
  prog.soc_rows.resize(tightened.rows.size());
  detail::parallel_for(static_cast<int>(tightened.rows.size()), [&](int r) {
    const auto& row = tightened.rows[static_cast<std::size_t>(r)];
    auto& out = prog.soc_rows[static_cast<std::size_t>(r)];
    out.eta = row.eta;
    out.a = rb.row(std::clamp(row.t, 0.0, T), row.c);
    out.b = row.d_inf;
    out.constraint = row.constraint;
    out.index = row.index;
  });

  prog.lambda_cond =
      spec.lambda_cond >= 0.0 ? spec.lambda_cond : 1e-10 * prog.gram.trace() / static_cast<double>(nb);
  return prog;
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "Optimal";
    case SolveStatus::kMaxIter: return "MaxIter";
    case SolveStatus::kInfeasible: return "Infeasible";
    case SolveStatus::kUnbounded: return "Unbounded";
    case SolveStatus::kNumericalError: return "NumericalError";
  }
  return "Unknown";
}

ConeProblem to_cone(const SOCProgram& prog, Mat* factor, double* lambda_used) {
  const int n = prog.size();
  if (prog.gram.rows() != n || prog.gram.cols() != n) throw UsageError("Gram matrix shape mismatch");
  double lambda = std::max(prog.lambda_cond, 0.0);
  const double floor = 1e-14 * std::max(1.0, prog.gram.diagonal().cwiseAbs().maxCoeff());
  Eigen::LLT<Mat> llt;
  for (int attempt = 0; attempt < 30; ++attempt) {
    Mat g = prog.gram;
    g.diagonal().array() += lambda;
    llt.compute(g);
    if (llt.info() == Eigen::Success) break;
    lambda = std::max(lambda * 10.0, floor);
  }
  if (llt.info() != Eigen::Success) throw NumericalError("Gram matrix is not positive definite");
  const Mat L = llt.matrixL();
  if (factor) *factor = L;
  if (lambda_used) *lambda_used = lambda;
  const auto lower = L.triangularView<Eigen::Lower>();

  const int iz = n;
  const int iw = n + 1;
  const int nv = n + 2;
  const auto neq = static_cast<Eigen::Index>(prog.equalities.size());
  const auto nl = static_cast<Eigen::Index>(prog.soc_rows.size());

  ConeProblem cp;
  cp.c = Vec::Zero(nv);
  if (n > 0) cp.c.head(n) = lower.solve(prog.linear);
  cp.c(iw) = 1.0;

  cp.A = Mat::Zero(neq, nv);
  cp.b = Vec::Zero(neq);
  if (neq > 0) {
    Mat a(n, neq);
    for (Eigen::Index k = 0; k < neq; ++k) {
      a.col(k) = prog.equalities[static_cast<std::size_t>(k)].a;
      cp.b(k) = prog.equalities[static_cast<std::size_t>(k)].b;
    }
    cp.A.leftCols(n) = lower.solve(a).transpose();
  }

  cp.dims.l = static_cast<int>(nl);
  cp.dims.q = {n + 1, 3};
  const Eigen::Index m = nl + (n + 1) + 3;
  cp.G = Mat::Zero(m, nv);
  cp.h = Vec::Zero(m);
  if (nl > 0) {
    Mat a(n, nl);
    for (Eigen::Index k = 0; k < nl; ++k) a.col(k) = prog.soc_rows[static_cast<std::size_t>(k)].a;
    const Mat wa = lower.solve(a);
    for (Eigen::Index k = 0; k < nl; ++k) {
      const auto& r = prog.soc_rows[static_cast<std::size_t>(k)];
      const double scale = std::sqrt(wa.col(k).squaredNorm() + r.eta * r.eta);
      const double inv = scale > 0.0 ? 1.0 / scale : 1.0;
      cp.G.row(k).head(n) = inv * wa.col(k).transpose();
      cp.G(k, iz) = inv * r.eta;
      cp.h(k) = inv * r.b;
    }
  }
  // ||beta|| <= z
  Eigen::Index off = nl;
  cp.G(off, iz) = -1.0;
  for (int k = 0; k < n; ++k) cp.G(off + 1 + k, k) = -1.0;
  off += n + 1;
  // (w + 1/4, w - 1/4, z) in Q^3, i.e. w >= z^2
  cp.G(off, iw) = -1.0;
  cp.h(off) = 0.25;
  cp.G(off + 1, iw) = -1.0;
  cp.h(off + 1) = -0.25;
  cp.G(off + 2, iz) = -1.0;
  return cp;
}

namespace {

// KKT refinement of  min c^T beta + ||beta||^2  s.t.  A beta = b,
// g_r^T beta + e_r ||beta|| <= h_r. Starts from the interior-point iterate and
// its duals on the rows whose dual exceeds ratio times the slack, runs damped Newton on
// the equality-constrained KKT system, then drops rows with negative
// multipliers and adds violated ones. Returns nothing when this does not
// settle on a certified point.
std::optional<Vec> polish_from(const ConeProblem& cp, int n, const ConeResult& res, double ratio) {
  const Vec c = cp.c.head(n);
  const Eigen::Index me = cp.A.rows();
  const Eigen::Index ml = cp.dims.l;
  const Mat aeq = cp.A.leftCols(n);
  const Mat gl = cp.G.topLeftCorner(ml, n);
  const Vec el = cp.G.col(n).head(ml);
  const Vec hl = cp.h.head(ml);
  const double pscale =
      1.0 + std::max(me ? cp.b.cwiseAbs().maxCoeff() : 0.0, ml ? hl.cwiseAbs().maxCoeff() : 0.0);
  const double dscale = 1.0 + c.norm();

  Vec beta = res.x.head(n);
  Vec mu = res.y.size() == me ? res.y : Vec::Zero(me);
  Vec nu = Vec::Zero(ml);
  std::vector<char> active(static_cast<std::size_t>(ml), 0);
  for (Eigen::Index r = 0; r < ml; ++r) {
    if (res.z(r) > ratio * res.s(r)) {
      active[static_cast<std::size_t>(r)] = 1;
      nu(r) = res.z(r);
    }
  }

  for (int round = 0; round < 8; ++round) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index r = 0; r < ml; ++r) {
      if (active[static_cast<std::size_t>(r)]) act.push_back(r);
    }
    const auto ms = static_cast<Eigen::Index>(act.size());
    const Eigen::Index mc = me + ms;
    if (mc > n) return std::nullopt;
    Vec y(mc);
    y.head(me) = mu;
    for (Eigen::Index k = 0; k < ms; ++k) y(me + k) = nu(act[k]);

    // Residual of the KKT system and the constraint Jacobian at (beta, y).
    auto residual = [&](const Vec& bt, const Vec& yy, Mat* jac) {
      const double nb = bt.norm();
      Mat m(mc, n);
      m.topRows(me) = aeq;
      Vec r(n + mc);
      r.segment(n, me) = aeq * bt - cp.b;
      for (Eigen::Index k = 0; k < ms; ++k) {
        const auto row = act[k];
        m.row(me + k) = gl.row(row);
        if (el(row) != 0.0) m.row(me + k) += (el(row) / nb) * bt.transpose();
        r(n + me + k) = gl.row(row).dot(bt) + el(row) * nb - hl(row);
      }
      r.head(n) = c + 2.0 * bt + m.transpose() * yy;
      if (jac) *jac = std::move(m);
      return r;
    };
    auto small = [&](const Vec& r) {
      return r.head(n).cwiseAbs().maxCoeff() <= 1e-13 * dscale &&
             (mc == 0 || r.tail(mc).cwiseAbs().maxCoeff() <= 1e-13 * pscale);
    };

    bool converged = false;
    for (int it = 0; it < 30; ++it) {
      const double nb = beta.norm();
      for (Eigen::Index k = 0; k < ms; ++k) {
        if (el(act[k]) != 0.0 && nb < 1e-10) return std::nullopt;
      }
      Mat m;
      const Vec r = residual(beta, y, &m);
      if (small(r)) {
        converged = true;
        break;
      }
      Mat kkt = Mat::Zero(n + mc, n + mc);
      auto hess = kkt.topLeftCorner(n, n);
      hess.diagonal().setConstant(2.0);
      for (Eigen::Index k = 0; k < ms; ++k) {
        const double w = y(me + k) * el(act[k]) / nb;
        if (w == 0.0) continue;
        hess.diagonal().array() += w;
        hess.noalias() -= (w / (nb * nb)) * beta * beta.transpose();
      }
      kkt.topRightCorner(n, mc) = m.transpose();
      kkt.bottomLeftCorner(mc, n) = m;
      const Vec step = kkt.partialPivLu().solve(Vec(-r));
      if (!step.allFinite()) return std::nullopt;
      // Backtrack on the residual norm.
      double t = 1.0;
      const double r0 = r.norm();
      bool moved = false;
      for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
        const Vec bt = beta + t * step.head(n);
        const Vec yy = y + t * step.tail(mc);
        if (residual(bt, yy, nullptr).norm() < (1.0 - 1e-4 * t) * r0) {
          beta = bt;
          y = yy;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    if (!converged) return std::nullopt;

    mu = y.head(me);
    nu.setZero();
    for (Eigen::Index k = 0; k < ms; ++k) nu(act[k]) = y(me + k);

    // Certificate: nonnegative multipliers and every orthant row satisfied.
    const double numax = ms > 0 ? nu.cwiseAbs().maxCoeff() : 0.0;
    const double nb = beta.norm();
    bool changed = false;
    for (Eigen::Index r = 0; r < ml; ++r) {
      auto& on = active[static_cast<std::size_t>(r)];
      if (on && nu(r) < -1e-9 * std::max(1.0, numax)) {
        on = 0;
        nu(r) = 0.0;
        changed = true;
      } else if (!on &&
                 gl.row(r).dot(beta) + el(r) * nb - hl(r) > 1e-11 * (1.0 + nb + std::abs(hl(r)))) {
        on = 1;
        changed = true;
      }
    }
    if (!changed) return beta;
  }
  return std::nullopt;
}

// A loosely converged iterate flags too many rows as active, which leaves the
// KKT system inconsistent; retry with stricter dual/slack ratios.
std::optional<Vec> polish(const ConeProblem& cp, int n, const ConeResult& res) {
  for (const double ratio : {1.0, 1e2, 1e4}) {
    if (auto beta = polish_from(cp, n, res, ratio)) return beta;
  }
  return std::nullopt;
}

}  // namespace

Solution solve(const SOCProgram& prog, const SolveOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Solution sol;
  const int n = prog.size();
  if (n == 0) throw UsageError("cannot solve an empty program");
  Mat L;
  double lambda = 0.0;
  ConeProblem cp = to_cone(prog, &L, &lambda);
  sol.lambda_cond = lambda;
  // Substituting (beta, z, w) = (s b, s z', s^2 w') and dividing the objective
  // by s^2 keeps the rotated cone unchanged and brings the optimum to O(1).
  const double scale = std::max(1.0, 0.5 * cp.c.head(n).norm());
  cp.c.head(n) /= scale;
  cp.b /= scale;
  cp.h.head(cp.dims.l) /= scale;
  ConeSettings settings;
  settings.tol = options.tol;
  settings.max_iter = options.max_iter;
  settings.verbose = options.verbose;
  const ConeResult res = solve_cone(cp, settings);
  sol.iterations = res.iterations;
  sol.inaccurate = res.inaccurate;
  sol.primal_residual = res.primal_residual;
  sol.dual_residual = res.dual_residual;
  sol.gap = res.relative_gap;
  switch (res.status) {
    case ConeStatus::kOptimal: sol.status = SolveStatus::kOptimal; break;
    case ConeStatus::kMaxIter: sol.status = SolveStatus::kMaxIter; break;
    case ConeStatus::kPrimalInfeasible: sol.status = SolveStatus::kInfeasible; break;
    case ConeStatus::kDualInfeasible: sol.status = SolveStatus::kUnbounded; break;
    case ConeStatus::kNumericalError: sol.status = SolveStatus::kNumericalError; break;
  }
  sol.infeasibility_residual = res.status == ConeStatus::kDualInfeasible
                                   ? res.dual_infeasibility
                                   : res.primal_infeasibility;
  if (res.x.size() == n + 2) {
    Vec beta = res.x.head(n);
    double z_model = res.x(n);
    if (options.polish && res.status == ConeStatus::kOptimal) {
      if (auto refined = polish(cp, n, res)) {
        beta = *refined;
        z_model = beta.norm();
        sol.polished = true;
      }
    }
    sol.alpha = L.transpose().triangularView<Eigen::Upper>().solve(Vec(scale * beta));
    sol.z_model = scale * z_model;
  } else {
    sol.alpha = Vec::Zero(n);
  }
  const double quad = sol.alpha.dot(prog.gram * sol.alpha);
  sol.z = std::sqrt(std::max(0.0, quad));
  sol.linear_cost = prog.linear.dot(sol.alpha);
  sol.objective = sol.linear_cost + quad + lambda * sol.alpha.squaredNorm();
  sol.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

// ---------------------------------------------------------------------------
// Conic export

namespace {

void write_vec(std::ostream& out, const Vec& v) {
  out << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out << ',';
    out << detail::fmt(v(i));
  }
  out << ']';
}

Vec read_vec(const nlohmann::json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

void export_conic(const SOCProgram& prog, std::ostream& out) {
  const int n = prog.size();
  Mat L = Mat::Zero(n, n);
  double lambda = prog.lambda_cond;
  if (n > 0) to_cone(prog, &L, &lambda);
  out << "{\n  \"n_vars\": " << n << ",\n  \"lambda_cond\": " << detail::fmt(lambda)
      << ",\n  \"objective\": {\n    \"quadratic_factor_L\": [";
  for (int i = 0; i < n; ++i) {
    out << (i ? ",\n      " : "\n      ");
    write_vec(out, L.row(i).transpose());
  }
  out << (n ? "\n    ],\n" : "],\n") << "    \"linear\": ";
  write_vec(out, n ? prog.linear : Vec());
  out << "\n  },\n  \"equalities\": [";
  for (std::size_t k = 0; k < prog.equalities.size(); ++k) {
    out << (k ? ",\n    " : "\n    ") << "{\"a\": ";
    write_vec(out, prog.equalities[k].a);
    out << ", \"b\": " << detail::fmt(prog.equalities[k].b) << '}';
  }
  out << (prog.equalities.empty() ? "],\n" : "\n  ],\n") << "  \"soc_rows\": [";
  for (std::size_t k = 0; k < prog.soc_rows.size(); ++k) {
    const auto& r = prog.soc_rows[k];
    out << (k ? ",\n    " : "\n    ") << "{\"eta\": " << detail::fmt(r.eta) << ", \"a\": ";
    write_vec(out, r.a);
    out << ", \"b\": " << detail::fmt(r.b) << ", \"constraint\": " << r.constraint
        << ", \"index\": " << r.index << '}';
  }
  out << (prog.soc_rows.empty() ? "],\n" : "\n  ],\n") << "  \"basis\": [";
  for (std::size_t k = 0; k < prog.basis.size(); ++k) {
    out << (k ? ",\n    " : "\n    ") << "{\"t\": " << detail::fmt(prog.basis[k].t) << ", \"c\": ";
    write_vec(out, prog.basis[k].c);
    out << '}';
  }
  out << (prog.basis.empty() ? "]\n}\n" : "\n  ]\n}\n");
}

void export_conic(const SOCProgram& prog, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  export_conic(prog, f);
  if (!f) throw std::runtime_error("error writing " + path);
}

SOCProgram import_conic(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("invalid conic JSON: ") + e.what());
  }
  try {
    SOCProgram prog;
    const int n = j.at("n_vars").get<int>();
    const auto& lj = j.at("objective").at("quadratic_factor_L");
    if (static_cast<int>(lj.size()) != n) throw UsageError("quadratic_factor_L must be n x n");
    Mat L(n, n);
    for (int i = 0; i < n; ++i) {
      const Vec row = read_vec(lj[static_cast<std::size_t>(i)]);
      if (row.size() != n) throw UsageError("quadratic_factor_L must be n x n");
      L.row(i) = row.transpose();
    }
    prog.lambda_cond = j.value("lambda_cond", 0.0);
    prog.gram = L * L.transpose();
    prog.gram.diagonal().array() -= prog.lambda_cond;
    prog.linear = read_vec(j.at("objective").at("linear"));
    if (prog.linear.size() != n) throw UsageError("linear objective has the wrong length");
    for (const auto& e : j.at("equalities")) {
      prog.equalities.push_back({read_vec(e.at("a")), e.at("b").get<double>()});
      if (prog.equalities.back().a.size() != n) throw UsageError("equality row length mismatch");
    }
    for (const auto& r : j.at("soc_rows")) {
      SocRow row;
      row.eta = r.at("eta").get<double>();
      row.a = read_vec(r.at("a"));
      row.b = r.at("b").get<double>();
      row.constraint = r.value("constraint", 0);
      row.index = r.value("index", 0);
      if (row.a.size() != n) throw UsageError("SOC row length mismatch");
      prog.soc_rows.push_back(std::move(row));
    }
    if (j.contains("basis")) {
      for (const auto& b : j.at("basis")) {
        prog.basis.push_back({b.at("t").get<double>(), read_vec(b.at("c"))});
      }
    }
    return prog;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed conic JSON: ") + e.what());
  }
}

SOCProgram import_conic_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return import_conic(f);
}

}  // namespace lqk
