#include "lqk/tightening.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "lqk/detail/format.hpp"
#include "lqk/detail/parallel.hpp"

namespace lqk {

namespace {

struct Window {
  double lo;
  double hi;
};

Window window(double t, double delta, double horizon) {
  return {std::max(0.0, t - delta), std::min(horizon, t + delta)};
}

double sample_at(const Window& w, int k, int n) {
  if (k == n - 1) return w.hi;
  return w.lo + (w.hi - w.lo) * k / (n - 1);
}

void check_samples(int n_samples) {
  if (n_samples < 2) throw UsageError("at least two samples per interval are required");
}

// ||K(., t) a - K(., s) b||_K from the three kernel quadratic forms.
double kernel_distance(double taa, double sbb, double cross) {
  return std::sqrt(std::max(0.0, taa + sbb - 2.0 * cross));
}

}  // namespace

// ---------------------------------------------------------------------------
// ConstraintSpec and coverings

ConstraintSpec::ConstraintSpec(MatrixFunction c, MatrixFunction d)
    : c_(std::move(c)), d_(std::move(d)) {
  if (d_.rows() != c_.rows() || d_.cols() != 1) {
    throw UsageError("d must be a column vector with one entry per row of C");
  }
}

Vec ConstraintSpec::row(int i, double t) const { return c_(t).row(i).transpose(); }

double ConstraintSpec::bound(int i, double t) const { return d_(t)(i, 0); }

double IntervalFamily::max_radius() const {
  return radii.empty() ? 0.0 : *std::max_element(radii.begin(), radii.end());
}

bool Covering::covers(double horizon, bool allow_zero) const {
  const double tol = 1e-12 * std::max(1.0, horizon);
  for (const auto& fam : families) {
    if (fam.centers.size() != fam.radii.size() || fam.centers.empty()) return false;
    std::vector<std::pair<double, double>> iv;
    for (std::size_t m = 0; m < fam.size(); ++m) {
      if (fam.radii[m] < 0.0 || (!allow_zero && fam.radii[m] == 0.0)) return false;
      iv.emplace_back(fam.centers[m] - fam.radii[m], fam.centers[m] + fam.radii[m]);
    }
    if (allow_zero) continue;
    std::sort(iv.begin(), iv.end());
    double reach = 0.0;
    for (const auto& [lo, hi] : iv) {
      if (lo > reach + tol) return false;
      reach = std::max(reach, hi);
    }
    if (reach < horizon - tol) return false;
  }
  return true;
}

void Covering::check(double horizon, int constraints, bool allow_zero) const {
  if (families.size() != 1 && families.size() != static_cast<std::size_t>(constraints)) {
    throw UsageError("covering needs one interval family, or one per constraint");
  }
  for (const auto& fam : families) {
    for (double c : fam.centers) {
      if (c < 0.0 || c > horizon) throw UsageError("covering center outside [0, T]");
    }
  }
  if (!covers(horizon, allow_zero)) throw UsageError("intervals do not cover [0, T]");
}

Covering build_uniform_covering(double horizon, int n_points, int constraints) {
  if (n_points < 1) throw UsageError("a covering needs at least one point");
  if (!(horizon > 0.0)) throw UsageError("horizon must be positive");
  IntervalFamily fam;
  for (int m = 1; m <= n_points; ++m) {
    fam.centers.push_back((m - 0.5) * horizon / n_points);
    fam.radii.push_back(horizon / (2.0 * n_points));
  }
  Covering cov;
  cov.families.assign(static_cast<std::size_t>(std::max(1, constraints)), fam);
  return cov;
}

Covering build_point_covering(double horizon, int n_points, int constraints) {
  Covering cov = build_uniform_covering(horizon, n_points, constraints);
  for (auto& fam : cov.families) std::fill(fam.radii.begin(), fam.radii.end(), 0.0);
  return cov;
}

// ---------------------------------------------------------------------------
// Tightening coefficients

double eta(const LQKernel& kernel, const ConstraintSpec& spec, int i, double t_m, double delta,
           int n_samples) {
  check_samples(n_samples);
  const Window w = window(t_m, delta, kernel.horizon());
  if (!(w.hi > w.lo)) return 0.0;
  const TimeFactors ft = kernel.factors(t_m);
  const Vec ct = spec.row(i, t_m);
  const double taa = ct.dot(kernel.k(ft, ft) * ct);
  double best = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    const double s = sample_at(w, k, n_samples);
    const TimeFactors fs = kernel.factors(s);
    const Vec cs = spec.row(i, s);
    best = std::max(best, kernel_distance(taa, cs.dot(kernel.k(fs, fs) * cs),
                                          ct.dot(kernel.k(ft, fs) * cs)));
  }
  return best;
}

double omega(const ConstraintSpec& spec, int i, double t, double delta, double horizon,
             int n_samples) {
  check_samples(n_samples);
  const Window w = window(t, delta, horizon);
  const double dt = spec.bound(i, t);
  double best = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    best = std::max(best, std::abs(dt - spec.bound(i, sample_at(w, k, n_samples))));
  }
  return best;
}

double d_inf(const ConstraintSpec& spec, int i, double t_m, double delta, double horizon,
             int n_samples) {
  check_samples(n_samples);
  const Window w = window(t_m, delta, horizon);
  double best = spec.bound(i, t_m);
  for (int k = 0; k < n_samples; ++k) {
    best = std::min(best, spec.bound(i, sample_at(w, k, n_samples)));
  }
  return best;
}

TightenedConstraints tighten(const LQKernel& kernel, const ConstraintSpec& spec,
                             const Covering& covering, const TighteningOptions& options) {
  check_samples(options.n_samples);
  const int p = spec.count();
  const double T = kernel.horizon();
  if (spec.state_dim() != kernel.state_dim() && p > 0) {
    throw UsageError("constraint matrix C must have N columns");
  }
  covering.check(T, p, true);
  const auto per_constraint = [&](const std::vector<double>& v, double fallback, int i) {
    return v.empty() ? fallback : v.at(static_cast<std::size_t>(i));
  };
  if (!options.eta_scale.empty() && options.eta_scale.size() != static_cast<std::size_t>(p)) {
    throw UsageError("eta_scale needs one entry per constraint");
  }
  if (!options.eta_override.empty() &&
      options.eta_override.size() != static_cast<std::size_t>(p)) {
    throw UsageError("eta_override needs one entry per constraint");
  }

  TightenedConstraints out;
  std::vector<std::size_t> first_row(static_cast<std::size_t>(p) + 1, 0);
  for (int i = 0; i < p; ++i) {
    const auto& fam = covering.families.size() == 1 ? covering.families[0]
                                                    : covering.families[static_cast<std::size_t>(i)];
    for (std::size_t m = 0; m < fam.size(); ++m) {
      TightenedRow row;
      row.constraint = i;
      row.index = static_cast<int>(m);
      row.t = fam.centers[m];
      row.delta = fam.radii[m];
      row.c = spec.row(i, row.t);
      out.rows.push_back(std::move(row));
    }
    first_row[static_cast<std::size_t>(i) + 1] = out.rows.size();
  }

  // Kernel factors at the sample points are shared by every constraint that
  // uses the same interval; cache them per distinct (t, delta).
  std::map<std::pair<double, double>, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    groups[{out.rows[r].t, out.rows[r].delta}].push_back(r);
  }
  std::vector<const std::vector<std::size_t>*> group_list;
  for (const auto& [key, rows] : groups) group_list.push_back(&rows);

  const int n = options.n_samples;
  detail::parallel_for(static_cast<int>(group_list.size()), [&](int g) {
    const auto& rows = *group_list[static_cast<std::size_t>(g)];
    const double t = out.rows[rows.front()].t;
    const double delta = out.rows[rows.front()].delta;
    const Window w = window(t, delta, T);
    const bool degenerate = !(w.hi > w.lo);
    const TimeFactors ft = kernel.factors(t);
    const Mat ktt = kernel.k(ft, ft);
    std::vector<double> samples;
    std::vector<TimeFactors> fs;
    std::vector<Mat> kss, kts;
    if (!degenerate) {
      for (int k = 0; k < n; ++k) {
        samples.push_back(sample_at(w, k, n));
        fs.push_back(kernel.factors(samples.back()));
        kss.push_back(kernel.k(fs.back(), fs.back()));
        kts.push_back(kernel.k(ft, fs.back()));
      }
    }
    for (std::size_t r : rows) {
      TightenedRow& row = out.rows[r];
      const int i = row.constraint;
      double e = 0.0;
      const double taa = row.c.dot(ktt * row.c);
      for (std::size_t k = 0; k < samples.size(); ++k) {
        const Vec cs = spec.row(i, samples[k]);
        e = std::max(e, kernel_distance(taa, cs.dot(kss[k] * cs), row.c.dot(kts[k] * cs)));
      }
      row.eta_computed = e;
      const double fixed = per_constraint(options.eta_override, -1.0, i);
      row.eta = fixed >= 0.0 ? fixed
                             : e * options.safety_factor * per_constraint(options.eta_scale, 1.0, i);
      row.d_inf = d_inf(spec, i, t, delta, T, n);
    }
  });
  return out;
}

void write_eta_table(std::ostream& out, const TightenedConstraints& tightened) {
  out << "i,m,t_m,delta_m,eta,d_inf\n";
  for (const auto& r : tightened.rows) {
    out << r.constraint + 1 << ',' << r.index + 1 << ',' << detail::fmt(r.t) << ','
        << detail::fmt(r.delta) << ',' << detail::fmt(r.eta) << ',' << detail::fmt(r.d_inf)
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Membership

MembershipChecker::MembershipChecker(std::shared_ptr<const LQKernel> kernel, ConstraintSpec spec,
                                     Covering covering, TightenedConstraints tightened,
                                     int dense_factor, int max_window_samples)
    : kernel_(std::move(kernel)),
      spec_(std::move(spec)),
      covering_(std::move(covering)),
      tightened_(std::move(tightened)) {
  if (!kernel_) throw UsageError("membership checker needs a kernel");
  if (dense_factor < 1) throw UsageError("dense factor must be >= 1");
  const double T = kernel_->horizon();
  const int p = spec_.count();
  covering_.check(T, p, true);
  const double tol = 1e-12 * std::max(1.0, T);

  lattice_ = kernel_->grid().refined(dense_factor);
  for (const auto& row : tightened_.rows) lattice_.push_back(row.t);
  std::sort(lattice_.begin(), lattice_.end());
  std::vector<double> merged;
  for (double t : lattice_) {
    if (merged.empty() || t > merged.back() + tol) merged.push_back(t);
  }
  lattice_ = std::move(merged);
  const int nl = static_cast<int>(lattice_.size());

  lattice_factors_.resize(lattice_.size());
  detail::parallel_for(nl, [&](int j) { lattice_factors_[j] = kernel_->factors(lattice_[j]); });

  const bool zero_q = kernel_->mode() == KernelMode::kZeroQ;
  eta_inf_.assign(static_cast<std::size_t>(p), std::vector<double>(lattice_.size(), 0.0));
  omega_inf_ = eta_inf_;
  for (int i = 0; i < p; ++i) {
    const auto& fam = covering_.families.size() == 1 ? covering_.families[0]
                                                     : covering_.families[static_cast<std::size_t>(i)];
    const double delta = fam.max_radius();
    std::vector<Vec> c(lattice_.size());
    std::vector<Vec> v(lattice_.size());
    std::vector<double> q(lattice_.size());
    std::vector<double> d(lattice_.size());
    detail::parallel_for(nl, [&](int j) {
      const auto& f = lattice_factors_[j];
      c[j] = spec_.row(i, lattice_[j]);
      d[j] = spec_.bound(i, lattice_[j]);
      if (zero_q) {
        v[j] = f.phi.transpose() * c[j];
        q[j] = v[j].dot(v[j] + f.m * v[j]);
      } else {
        q[j] = c[j].dot(kernel_->k(f, f) * c[j]);
      }
    });
    if (delta <= 0.0) continue;
    detail::parallel_for(nl, [&](int j) {
      const double t = lattice_[j];
      const auto lo = static_cast<int>(
          std::lower_bound(lattice_.begin(), lattice_.end(), t - delta - tol) - lattice_.begin());
      const auto hi = static_cast<int>(
          std::upper_bound(lattice_.begin(), lattice_.end(), t + delta + tol) - lattice_.begin()) - 1;
      const int span = std::max(hi - lo, 1);
      const int stride = std::max(1, (span + max_window_samples - 2) / (max_window_samples - 1));
      double e = 0.0;
      double o = 0.0;
      auto visit = [&](int k) {
        double cross;
        if (zero_q) {
          const Mat& m = (j <= k) ? lattice_factors_[j].m : lattice_factors_[k].m;
          cross = v[j].dot(v[k] + m * v[k]);
        } else {
          cross = c[j].dot(kernel_->k(lattice_factors_[j], lattice_factors_[k]) * c[k]);
        }
        e = std::max(e, kernel_distance(q[j], q[k], cross));
        o = std::max(o, std::abs(d[j] - d[k]));
      };
      for (int k = lo; k <= hi; k += stride) visit(k);
      visit(hi);
      eta_inf_[i][j] = e;
      omega_inf_[i][j] = o;
    });
  }

  // At covering centers the finite-covering coefficients bound the
  // lattice-sampled ones from below.
  for (const auto& row : tightened_.rows) {
    const auto j = static_cast<std::size_t>(
        std::lower_bound(lattice_.begin(), lattice_.end(), row.t - tol) - lattice_.begin());
    auto& e = eta_inf_[static_cast<std::size_t>(row.constraint)][j];
    auto& o = omega_inf_[static_cast<std::size_t>(row.constraint)][j];
    e = std::max(e, row.eta);
    o = std::max(o, spec_.bound(row.constraint, lattice_[j]) - row.d_inf);
  }
}

std::vector<Vec> MembershipChecker::trajectory_on_lattice(const RepresenterFunction& f) const {
  if (f.kernel() != kernel_) throw UsageError("function belongs to a different kernel");
  return f.eval_at(lattice_factors_);
}

MembershipResult MembershipChecker::check(const RepresenterFunction& f, double norm,
                                          ConstraintSet which, const Vec& eps, double tol) const {
  return check_values(trajectory_on_lattice(f), norm, which, eps, tol);
}

MembershipResult MembershipChecker::check_values(const std::vector<Vec>& values, double norm,
                                                 ConstraintSet which, const Vec& eps,
                                                 double tol) const {
  if (values.size() != lattice_.size()) throw UsageError("values must be given on the lattice");
  const int p = spec_.count();
  MembershipResult res;
  res.member = true;
  res.worst_margin = std::numeric_limits<double>::infinity();
  auto record = [&](double slack, double scale, int i, double t) {
    if (slack < res.worst_margin) {
      res.worst_margin = slack;
      res.worst_constraint = i;
      res.worst_time = t;
    }
    if (slack < -tol * (1.0 + std::abs(scale))) res.member = false;
  };

  if (which == ConstraintSet::kVdeltaFin) {
    const double ttol = 1e-12 * std::max(1.0, kernel_->horizon());
    for (const auto& row : tightened_.rows) {
      const auto j = static_cast<std::size_t>(
          std::lower_bound(lattice_.begin(), lattice_.end(), row.t - ttol) - lattice_.begin());
      const double slack = row.d_inf - row.c.dot(values[j]) - row.eta * norm;
      record(slack, row.d_inf, row.constraint, row.t);
    }
    if (tightened_.rows.empty()) res.worst_margin = 0.0;
    return res;
  }

  Vec e = Vec::Zero(p);
  if (which == ConstraintSet::kVeps) {
    if (eps.size() == 1) {
      e.setConstant(eps(0));
    } else if (eps.size() == p) {
      e = eps;
    } else {
      throw UsageError("eps must be a scalar or have one entry per constraint");
    }
  }
  for (std::size_t j = 0; j < lattice_.size(); ++j) {
    const double t = lattice_[j];
    const Mat C = spec_.C()(t);
    const Mat d = spec_.d()(t);
    for (int i = 0; i < p; ++i) {
      double slack = d(i, 0) - C.row(i).dot(values[j]);
      if (which == ConstraintSet::kVeps) slack -= e(i);
      if (which == ConstraintSet::kVdeltaInf) {
        slack -= eta_inf_[static_cast<std::size_t>(i)][j] * norm +
                 omega_inf_[static_cast<std::size_t>(i)][j];
      }
      record(slack, d(i, 0), i, t);
    }
  }
  if (p == 0) res.worst_margin = 0.0;
  return res;
}

Vec MembershipChecker::epsilon_bound(double y0) const {
  const int p = spec_.count();
  Vec out = Vec::Zero(p);
  for (int i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < lattice_.size(); ++j) {
      out(i) = std::max(out(i), eta_inf_[static_cast<std::size_t>(i)][j] * y0 +
                                    omega_inf_[static_cast<std::size_t>(i)][j]);
    }
  }
  return out;
}

MembershipResult membership(std::shared_ptr<const LQKernel> kernel, const RepresenterFunction& f,
                            double norm, const ConstraintSpec& spec, const Covering& covering,
                            const TightenedConstraints& tightened, ConstraintSet which,
                            int dense_factor, const Vec& eps) {
  const MembershipChecker checker(std::move(kernel), spec, covering, tightened, dense_factor);
  return checker.check(f, norm, which, eps);
}

}  // namespace lqk
