#include "lqk/cone_lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace lqk {

int ConeDims::size() const {
  int m = l;
  for (int k : q) m += k;
  return m;
}

int ConeDims::degree() const { return l + static_cast<int>(q.size()); }

std::string to_string(ConeStatus status) {
  switch (status) {
    case ConeStatus::kOptimal: return "Optimal";
    case ConeStatus::kMaxIter: return "MaxIter";
    case ConeStatus::kPrimalInfeasible: return "Infeasible";
    case ConeStatus::kDualInfeasible: return "Unbounded";
    case ConeStatus::kNumericalError: return "NumericalError";
  }
  return "Unknown";
}

namespace cone {

namespace {

// u^T J u computed as (u0 - |u1|)(u0 + |u1|).
double j_norm_sq(const Vec& u) {
  const double r = u.tail(u.size() - 1).norm();
  return (u(0) - r) * (u(0) + r);
}

}  // namespace

SocScaling soc_scaling(const Vec& s, const Vec& z) {
  const double sn = std::sqrt(std::max(j_norm_sq(s), 0.0));
  const double zn = std::sqrt(std::max(j_norm_sq(z), 0.0));
  if (!(sn > 0.0) || !(zn > 0.0)) throw NumericalError("iterate left the second-order cone");
  const Vec sb = s / sn;
  const Vec zb = z / zn;
  const double gamma = std::sqrt(std::max(0.5 * (1.0 + sb.dot(zb)), 0.0));
  Vec wb = sb;
  wb(0) += zb(0);
  wb.tail(wb.size() - 1) -= zb.tail(zb.size() - 1);
  wb /= 2.0 * gamma;
  SocScaling w;
  w.beta = std::sqrt(sn / zn);
  w.v = wb;
  w.v(0) += 1.0;
  w.v /= std::sqrt(2.0 * (wb(0) + 1.0));
  return w;
}

Vec soc_apply(const SocScaling& w, const Vec& x) {
  // beta (2 v v^T - J) x
  Vec out = 2.0 * w.v.dot(x) * w.v;
  out(0) -= x(0);
  out.tail(x.size() - 1) += x.tail(x.size() - 1);
  return w.beta * out;
}

Vec soc_apply_inverse(const SocScaling& w, const Vec& x) {
  // (1/beta) (2 J v v^T J - J) x
  Vec jv = w.v;
  jv.tail(jv.size() - 1) *= -1.0;
  Vec out = 2.0 * jv.dot(x) * jv;
  out(0) -= x(0);
  out.tail(x.size() - 1) += x.tail(x.size() - 1);
  return out / w.beta;
}

Vec soc_product(const Vec& u, const Vec& v) {
  Vec out(u.size());
  out(0) = u.dot(v);
  out.tail(u.size() - 1) = u(0) * v.tail(v.size() - 1) + v(0) * u.tail(u.size() - 1);
  return out;
}

Vec soc_divide(const Vec& lambda, const Vec& r) {
  const double det = j_norm_sq(lambda);
  const auto l1 = lambda.tail(lambda.size() - 1);
  const auto r1 = r.tail(r.size() - 1);
  Vec out(r.size());
  out(0) = (lambda(0) * r(0) - l1.dot(r1)) / det;
  out.tail(r.size() - 1) = (r1 - out(0) * l1) / lambda(0);
  return out;
}

double soc_max_step(const Vec& u, const Vec& d) {
  const auto u1 = u.tail(u.size() - 1);
  const auto d1 = d.tail(d.size() - 1);
  const double a = d(0) * d(0) - d1.squaredNorm();
  const double b = u(0) * d(0) - u1.dot(d1);
  const double c = j_norm_sq(u);
  const double inf = std::numeric_limits<double>::infinity();
  if (c <= 0.0) return 0.0;
  const double disc = b * b - a * c;
  if (disc < 0.0) return inf;
  const double sq = std::sqrt(disc);
  // Roots of a t^2 + 2 b t + c, computed without cancellation.
  const double qv = -(b + std::copysign(sq, b));
  double best = inf;
  if (qv != 0.0) {
    const double r2 = c / qv;
    if (r2 > 0.0) best = std::min(best, r2);
  }
  if (a != 0.0) {
    const double r1 = qv / a;
    if (r1 > 0.0) best = std::min(best, r1);
  }
  return best;
}

}  // namespace cone

namespace {

struct Scaling {
  Vec d;  // orthant: W = diag(d)
  std::vector<cone::SocScaling> soc;
};

template <typename F>
void for_each_soc(const ConeDims& dims, F&& f) {
  int off = dims.l;
  for (std::size_t k = 0; k < dims.q.size(); ++k) {
    f(k, off, dims.q[k]);
    off += dims.q[k];
  }
}

Vec identity_element(const ConeDims& dims) {
  Vec e = Vec::Zero(dims.size());
  e.head(dims.l).setOnes();
  for_each_soc(dims, [&](std::size_t, int off, int) { e(off) = 1.0; });
  return e;
}

Vec apply_w(const ConeDims& dims, const Scaling& w, const Vec& x, bool inverse) {
  Vec out(x.size());
  if (inverse) {
    out.head(dims.l) = x.head(dims.l).cwiseQuotient(w.d);
  } else {
    out.head(dims.l) = x.head(dims.l).cwiseProduct(w.d);
  }
  for_each_soc(dims, [&](std::size_t k, int off, int q) {
    const Vec seg = x.segment(off, q);
    out.segment(off, q) = inverse ? cone::soc_apply_inverse(w.soc[k], seg)
                                  : cone::soc_apply(w.soc[k], seg);
  });
  return out;
}

// W^{-1} G, applying the rank-one structure of each cone block.
Mat scale_rows_inverse(const ConeDims& dims, const Scaling& w, const Mat& g) {
  Mat out(g.rows(), g.cols());
  out.topRows(dims.l) = w.d.cwiseInverse().asDiagonal() * g.topRows(dims.l);
  for_each_soc(dims, [&](std::size_t k, int off, int q) {
    const auto& sc = w.soc[k];
    Vec jv = sc.v;
    jv.tail(q - 1) *= -1.0;
    const auto blk = g.middleRows(off, q);
    Mat res = (2.0 * jv) * (jv.transpose() * blk);
    res.row(0) -= blk.row(0);
    res.bottomRows(q - 1) += blk.bottomRows(q - 1);
    out.middleRows(off, q) = res / sc.beta;
  });
  return out;
}

Vec jordan_product(const ConeDims& dims, const Vec& u, const Vec& v) {
  Vec out(u.size());
  out.head(dims.l) = u.head(dims.l).cwiseProduct(v.head(dims.l));
  for_each_soc(dims, [&](std::size_t, int off, int q) {
    out.segment(off, q) = cone::soc_product(u.segment(off, q), v.segment(off, q));
  });
  return out;
}

Vec jordan_divide(const ConeDims& dims, const Vec& lambda, const Vec& r) {
  Vec out(r.size());
  out.head(dims.l) = r.head(dims.l).cwiseQuotient(lambda.head(dims.l));
  for_each_soc(dims, [&](std::size_t, int off, int q) {
    out.segment(off, q) = cone::soc_divide(lambda.segment(off, q), r.segment(off, q));
  });
  return out;
}

// Smallest "eigenvalue" of u: min over orthant entries and u0 - |u1| per cone.
double min_eig(const ConeDims& dims, const Vec& u) {
  double m = std::numeric_limits<double>::infinity();
  if (dims.l > 0) m = u.head(dims.l).minCoeff();
  for_each_soc(dims, [&](std::size_t, int off, int q) {
    m = std::min(m, u(off) - u.segment(off + 1, q - 1).norm());
  });
  return m;
}

double max_step(const ConeDims& dims, const Vec& u, const Vec& d) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dims.l; ++i) {
    if (d(i) < 0.0) best = std::min(best, -u(i) / d(i));
  }
  for_each_soc(dims, [&](std::size_t, int off, int q) {
    best = std::min(best, cone::soc_max_step(u.segment(off, q), d.segment(off, q)));
  });
  return best;
}

Scaling compute_scaling(const ConeDims& dims, const Vec& s, const Vec& z) {
  Scaling w;
  w.d = s.head(dims.l).cwiseQuotient(z.head(dims.l)).cwiseSqrt();
  for_each_soc(dims, [&](std::size_t, int off, int q) {
    w.soc.push_back(cone::soc_scaling(s.segment(off, q), z.segment(off, q)));
  });
  return w;
}

// Solves
//   [ 0  A^T  G^T   ] [dx]   [r1]
//   [ A   0    0    ] [dy] = [r2]
//   [ G   0  -W^T W ] [dz]   [r3]
// through the normal equations M = G^T W^{-2} G and a Schur complement on A.
class KktSolver {
 public:
  KktSolver(const ConeProblem& p, const Scaling* w, int refinement)
      : p_(p), w_(w), refinement_(refinement) {
    const auto n = p.G.cols();
    h_ = w ? scale_rows_inverse(p.dims, *w, p.G) : p.G;
    Mat m = Mat::Zero(n, n);
    m.selfadjointView<Eigen::Lower>().rankUpdate(h_.transpose());
    m = m.selfadjointView<Eigen::Lower>();
    double reg = 0.0;
    const double scale = std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 8; ++attempt) {
      Mat mr = m;
      mr.diagonal().array() += reg;
      m_llt_.compute(mr);
      if (m_llt_.info() == Eigen::Success) break;
      reg = reg == 0.0 ? 1e-14 * scale : reg * 100.0;
    }
    if (m_llt_.info() != Eigen::Success) throw NumericalError("normal-equation matrix is singular");
    if (p.A.rows() > 0) {
      minv_at_ = m_llt_.solve(p.A.transpose());
      s_ldlt_.compute(p.A * minv_at_);
      if (s_ldlt_.info() != Eigen::Success) throw NumericalError("equality Schur complement failed");
    }
  }

  void solve(const Vec& r1, const Vec& r2, const Vec& r3, Vec& dx, Vec& dy, Vec& dz) const {
    solve_once(r1, r2, r3, dx, dy, dz);
    for (int k = 0; k < refinement_; ++k) {
      Vec e1, e2, e3;
      residual(r1, r2, r3, dx, dy, dz, e1, e2, e3);
      Vec cx, cy, cz;
      solve_once(e1, e2, e3, cx, cy, cz);
      dx += cx;
      dy += cy;
      dz += cz;
    }
  }

 private:
  Vec w_apply(const Vec& x, bool inverse) const {
    return w_ ? apply_w(p_.dims, *w_, x, inverse) : x;
  }

  void solve_once(const Vec& r1, const Vec& r2, const Vec& r3, Vec& dx, Vec& dy,
                  Vec& dz) const {
    const Vec w3 = w_apply(r3, true);
    const Vec rhs = r1 + h_.transpose() * w3;
    const Vec t = m_llt_.solve(rhs);
    if (p_.A.rows() > 0) {
      dy = s_ldlt_.solve(p_.A * t - r2);
      dx = t - minv_at_ * dy;
    } else {
      dy = Vec::Zero(0);
      dx = t;
    }
    dz = w_apply(h_ * dx - w3, true);
  }

  void residual(const Vec& r1, const Vec& r2, const Vec& r3, const Vec& dx, const Vec& dy,
                const Vec& dz, Vec& e1, Vec& e2, Vec& e3) const {
    e1 = r1 - p_.G.transpose() * dz;
    if (p_.A.rows() > 0) e1 -= p_.A.transpose() * dy;
    e2 = p_.A.rows() > 0 ? Vec(r2 - p_.A * dx) : Vec::Zero(0);
    e3 = r3 - (p_.G * dx - w_apply(w_apply(dz, false), false));
  }

  const ConeProblem& p_;
  const Scaling* w_;
  int refinement_;
  Mat h_;
  Eigen::LLT<Mat> m_llt_;
  Mat minv_at_;
  Eigen::LDLT<Mat> s_ldlt_;
};

void check_problem(const ConeProblem& p) {
  const auto n = p.c.size();
  const auto m = p.dims.size();
  if (p.dims.l < 0) throw UsageError("negative orthant dimension");
  for (int q : p.dims.q) {
    if (q < 1) throw UsageError("second-order cone blocks need dimension >= 1");
  }
  if (p.G.rows() != m || p.G.cols() != n || p.h.size() != m) {
    throw UsageError("G and h must match the cone dimensions and the variable count");
  }
  if (p.A.rows() != p.b.size() || (p.A.rows() > 0 && p.A.cols() != n)) {
    throw UsageError("A and b have inconsistent shapes");
  }
  if (!p.c.allFinite() || !p.G.allFinite() || !p.h.allFinite() || !p.A.allFinite() ||
      !p.b.allFinite()) {
    throw UsageError("conic program data must be finite");
  }
}

// Drops linearly dependent equality rows. Returns false when the dropped rows
// are inconsistent with the kept ones.
bool reduce_equalities(ConeProblem& p) {
  if (p.A.rows() == 0) return true;
  Eigen::ColPivHouseholderQR<Mat> qr(p.A.transpose());
  qr.setThreshold(1e-12);
  const auto rank = qr.rank();
  if (rank == p.A.rows()) return true;
  const auto perm = qr.colsPermutation().indices();
  Mat a(rank, p.A.cols());
  Vec b(rank);
  for (Eigen::Index k = 0; k < rank; ++k) {
    a.row(k) = p.A.row(perm(k));
    b(k) = p.b(perm(k));
  }
  const Vec x = a.transpose() * (a * a.transpose()).ldlt().solve(b);
  const bool consistent = (p.A * x - p.b).norm() <= 1e-9 * (1.0 + p.b.norm());
  p.A = a;
  p.b = b;
  return consistent;
}

}  // namespace

ConeResult solve_cone(const ConeProblem& problem, const ConeSettings& settings) {
  check_problem(problem);
  ConeProblem p = problem;
  if (p.A.rows() == 0) p.A.resize(0, p.c.size());
  ConeResult res;
  const auto n = p.c.size();
  const auto m = p.dims.size();
  const double inf = std::numeric_limits<double>::infinity();
  res.primal_infeasibility = inf;
  res.dual_infeasibility = inf;
  if (!reduce_equalities(p)) {
    res.status = ConeStatus::kPrimalInfeasible;
    res.primal_infeasibility = 0.0;
    return res;
  }
  const auto neq = p.A.rows();
  const ConeDims& dims = p.dims;
  const Vec e = identity_element(dims);
  const double deg = dims.degree();

  const double cx0 = std::max(1.0, p.c.norm());
  const double by0 = std::max(1.0, p.b.norm());
  const double hz0 = std::max(1.0, p.h.norm());

  Vec x, y, z, s;
  {
    const KktSolver kkt(p, nullptr, settings.refinement_steps);
    Vec tmp;
    kkt.solve(Vec::Zero(n), p.b, p.h, x, y, tmp);
    s = -tmp;
    Vec xd;
    kkt.solve(-p.c, Vec::Zero(neq), Vec::Zero(m), xd, y, z);
    const double ts = -min_eig(dims, s);
    const double tz = -min_eig(dims, z);
    if (m > 0) {
      if (ts >= -1e-8 * std::max(1.0, s.norm())) s += (1.0 + ts) * e;
      if (tz >= -1e-8 * std::max(1.0, z.norm())) z += (1.0 + tz) * e;
    }
  }
  double tau = 1.0;
  double kappa = 1.0;

  // Best iterates seen so far, used when the iteration stalls.
  ConeResult best_opt, best_pinf, best_dinf;
  double best_opt_measure = inf;
  best_pinf.primal_infeasibility = inf;
  best_dinf.dual_infeasibility = inf;
  auto stalled = [&](ConeStatus failed) {
    const double t = settings.tol_inaccurate;
    ConeResult out;
    if (best_opt_measure <= t) {
      out = best_opt;
      out.status = ConeStatus::kOptimal;
    } else if (best_pinf.primal_infeasibility <= t) {
      out = best_pinf;
      out.status = ConeStatus::kPrimalInfeasible;
    } else if (best_dinf.dual_infeasibility <= t) {
      out = best_dinf;
      out.status = ConeStatus::kDualInfeasible;
    } else {
      res.status = failed;
      return res;
    }
    out.inaccurate = true;
    out.iterations = res.iterations;
    return out;
  };

  for (int it = 0;; ++it) {
    res.iterations = it;
    const Vec aty = neq > 0 ? Vec(p.A.transpose() * y) : Vec::Zero(n);
    const Vec hrx = aty + p.G.transpose() * z;
    const Vec ax = neq > 0 ? Vec(p.A * x) : Vec::Zero(0);
    const Vec gx = p.G * x;
    const Vec rx = hrx + p.c * tau;
    const Vec ry = -ax + p.b * tau;
    const Vec rz = -gx + p.h * tau - s;
    const double cx = p.c.dot(x);
    const double byhz = p.b.dot(y) + p.h.dot(z);
    const double rt = -cx - byhz - kappa;

    const double pcost = cx / tau;
    const double dcost = -byhz / tau;
    const double gap = s.dot(z) / (tau * tau);
    res.primal_objective = pcost;
    res.dual_objective = dcost;
    res.gap = gap;
    res.relative_gap = gap / std::max(1.0, std::abs(pcost));
    res.primal_residual = std::max(ry.norm() / by0, rz.norm() / hz0) / tau;
    res.dual_residual = rx.norm() / cx0 / tau;
    res.primal_infeasibility = byhz < 0.0 ? hrx.norm() / cx0 / -byhz : inf;
    res.dual_infeasibility =
        cx < 0.0 ? std::max(ax.norm() / by0, (gx + s).norm() / hz0) / -cx : inf;

    if (settings.verbose) {
      std::fprintf(stderr, "%3d  pcost %+.6e  dcost %+.6e  pres %.2e  dres %.2e  gap %.2e  pinf %.2e  dinf %.2e  tau %.2e  kappa %.2e\n",
                   it, pcost, dcost, res.primal_residual, res.dual_residual, res.relative_gap,
                   res.primal_infeasibility, res.dual_infeasibility, tau, kappa);
    }
    if (!x.allFinite() || !z.allFinite() || !s.allFinite() || !std::isfinite(tau)) {
      return stalled(ConeStatus::kNumericalError);
    }
    const bool optimal = res.primal_residual <= settings.tol &&
                         res.dual_residual <= settings.tol && res.relative_gap <= settings.tol;
    if (optimal) {
      res.status = ConeStatus::kOptimal;
      res.x = x / tau;
      res.y = y / tau;
      res.z = z / tau;
      res.s = s / tau;
      return res;
    }
    if (res.primal_infeasibility <= settings.tol) {
      res.status = ConeStatus::kPrimalInfeasible;
      res.x = Vec::Zero(n);
      res.s = Vec::Zero(m);
      res.y = y / -byhz;
      res.z = z / -byhz;
      return res;
    }
    if (res.dual_infeasibility <= settings.tol) {
      res.status = ConeStatus::kDualInfeasible;
      res.x = x / -cx;
      res.s = s / -cx;
      res.y = Vec::Zero(neq);
      res.z = Vec::Zero(m);
      return res;
    }
    {
      const double measure =
          std::max({res.primal_residual, res.dual_residual, res.relative_gap});
      if (measure < best_opt_measure) {
        best_opt_measure = measure;
        best_opt = res;
        best_opt.x = x / tau;
        best_opt.y = y / tau;
        best_opt.z = z / tau;
        best_opt.s = s / tau;
      }
      if (res.primal_infeasibility < best_pinf.primal_infeasibility) {
        best_pinf = res;
        best_pinf.x = Vec::Zero(n);
        best_pinf.s = Vec::Zero(m);
        best_pinf.y = y / -byhz;
        best_pinf.z = z / -byhz;
      }
      if (res.dual_infeasibility < best_dinf.dual_infeasibility) {
        best_dinf = res;
        best_dinf.x = x / -cx;
        best_dinf.s = s / -cx;
        best_dinf.y = Vec::Zero(neq);
        best_dinf.z = Vec::Zero(m);
      }
    }
    if (it >= settings.max_iter) {
      res.x = x / tau;
      res.y = y / tau;
      res.z = z / tau;
      res.s = s / tau;
      const ConeResult fallback = stalled(ConeStatus::kMaxIter);
      return fallback.inaccurate ? fallback : res;
    }

    try {
      const Scaling w = compute_scaling(dims, s, z);
      const Vec lambda = apply_w(dims, w, z, false);
      const KktSolver kkt(p, &w, settings.refinement_steps);
      Vec x2, y2, z2;
      kkt.solve(-p.c, p.b, p.h, x2, y2, z2);
      const double denom = kappa / tau + apply_w(dims, w, z2, false).squaredNorm();
      const double mu = (s.dot(z) + tau * kappa) / (deg + 1.0);
      const Vec lambda_sq = jordan_product(dims, lambda, lambda);

      Vec ds_a, dz_a;
      double dtau_a = 0.0;
      double dkappa_a = 0.0;
      double sigma = 0.0;
      for (int pass = 0; pass < 2; ++pass) {
        const bool affine = pass == 0;
        const double eta = affine ? 1.0 : 1.0 - sigma;
        Vec rc = -lambda_sq;
        double rtc = -tau * kappa;
        if (!affine) {
          rc -= jordan_product(dims, apply_w(dims, w, ds_a, true), apply_w(dims, w, dz_a, false));
          rc += sigma * mu * e;
          rtc += -dtau_a * dkappa_a + sigma * mu;
        }
        const Vec q = jordan_divide(dims, lambda, rc);
        Vec x1, y1, z1;
        kkt.solve(-eta * rx, eta * ry, eta * rz - apply_w(dims, w, q, false), x1, y1, z1);
        const double dtau =
            (-eta * rt + rtc / tau + p.c.dot(x1) + p.b.dot(y1) + p.h.dot(z1)) / denom;
        const Vec dx = x1 + dtau * x2;
        const Vec dy = y1 + dtau * y2;
        const Vec dz = z1 + dtau * z2;
        const Vec ds = apply_w(dims, w, q - apply_w(dims, w, dz, false), false);
        const double dkappa = (rtc - kappa * dtau) / tau;

        double alpha = std::min(max_step(dims, s, ds), max_step(dims, z, dz));
        if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
        if (dkappa < 0.0) alpha = std::min(alpha, -kappa / dkappa);
        if (affine) {
          const double a = std::min(1.0, alpha);
          sigma = std::pow(1.0 - a, 3);
          ds_a = ds;
          dz_a = dz;
          dtau_a = dtau;
          dkappa_a = dkappa;
        } else {
          const double step = std::min(1.0, 0.99 * alpha);
          x += step * dx;
          y += step * dy;
          z += step * dz;
          s += step * ds;
          tau += step * dtau;
          kappa += step * dkappa;
        }
      }
    } catch (const NumericalError& err) {
      if (settings.verbose) std::fprintf(stderr, "stopped: %s\n", err.what());
      res.x = x / tau;
      res.y = y / tau;
      res.z = z / tau;
      res.s = s / tau;
      return stalled(ConeStatus::kNumericalError);
    }
  }
}

}  // namespace lqk
