#include "lqk/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lqk/detail/format.hpp"
#include "lqk/detail/parallel.hpp"
#include "lqk/detail/rk4.hpp"

namespace lqk {

namespace {

// B(t) R(t)^{-1} B(t)^T.
Mat input_weight(const LinearSystem& sys, double t) {
  const Mat r = sys.R()(t);
  Eigen::LLT<Mat> llt(0.5 * (r + r.transpose()));
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "R(t) is not positive definite at t=" << t;
    throw NumericalError(os.str());
  }
  const Mat b = sys.B()(t);
  return b * llt.solve(b.transpose());
}

// Generator of the augmented system (K, Pi, W) with W' = -A^T W feeding the
// jump-free part of the state equation.
Mat hamiltonian(const LinearSystem& sys, double t) {
  const int n = sys.state_dim();
  const Mat a = sys.A()(t);
  const Mat s = input_weight(sys, t);
  Mat h = Mat::Zero(3 * n, 3 * n);
  h.block(0, 0, n, n) = a;
  h.block(0, n, n, n) = s;
  h.block(0, 2 * n, n, n) = s;
  h.block(n, 0, n, n) = sys.Q()(t);
  h.block(n, n, n, n) = -a.transpose();
  h.block(2 * n, 2 * n, n, n) = -a.transpose();
  return h;
}

Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

LQKernel::LQKernel(LinearSystem sys, int grid_points, std::optional<KernelMode> mode)
    : st_(std::move(sys), grid_points),
      mode_(mode.value_or(st_.system().zero_state_cost() ? KernelMode::kZeroQ
                                                         : KernelMode::kGeneralQ)) {
  const auto& s = system();
  const auto& g = grid();
  const int n = s.state_dim();
  if (mode_ == KernelMode::kZeroQ && !s.zero_state_cost()) {
    throw UsageError("ZeroQ mode requires Q identically zero");
  }
  phi_T_ = st_.from_origin(s.horizon());
  const auto nodes = static_cast<std::size_t>(g.size());

  if (mode_ == KernelMode::kZeroQ) {
    m_nodes_.resize(nodes);
    if (s.time_invariant()) {
      const Mat& a = s.A().constant_value();
      Mat gen = Mat::Zero(2 * n, 2 * n);
      gen.topLeftCorner(n, n) = -a;
      gen.topRightCorner(n, n) = input_weight(s, 0.0);
      gen.bottomRightCorner(n, n) = a.transpose();
      van_loan_generator_ = gen;
      detail::parallel_for(g.size(), [&](int i) { m_nodes_[i] = van_loan_m(g[i]); });
    } else {
      std::vector<Mat> f(nodes);
      detail::parallel_for(g.size(), [&](int i) {
        const Mat pinv = st_.from_origin_inverse(g[i]);
        f[i] = pinv * input_weight(s, g[i]) * pinv.transpose();
      });
      // Composite Simpson over node pairs; odd nodes use the one-panel
      // quadratic rule on the first half of the pair.
      const double h = g.step();
      m_nodes_[0] = Mat::Zero(n, n);
      for (int i = 1; i < g.size(); ++i) {
        if (i % 2 == 0) {
          m_nodes_[i] = m_nodes_[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
        } else {
          m_nodes_[i] = m_nodes_[i - 1] + h / 12.0 * (5.0 * f[i - 1] + 8.0 * f[i] - f[i + 1]);
        }
        m_nodes_[i] = symmetrized(m_nodes_[i]);
      }
    }
    return;
  }

  xi_nodes_.resize(nodes);
  if (s.A().is_constant() && s.B().is_constant() && s.R().is_constant() && s.Q().is_constant()) {
    hamiltonian_generator_ = hamiltonian(s, 0.0);
    detail::parallel_for(g.size(), [&](int i) { xi_nodes_[i] = expm(*hamiltonian_generator_ * g[i]); });
  } else {
    auto coeff = [&s](double t) { return hamiltonian(s, t); };
    xi_nodes_[0] = Mat::Identity(3 * n, 3 * n);
    for (int i = 1; i < g.size(); ++i) {
      xi_nodes_[i] = detail::rk4_linear_step(coeff, g[i - 1], xi_nodes_[i - 1], g[i] - g[i - 1]);
    }
  }
  xi_T_ = xi_nodes_.back();
  if (!xi_T_.allFinite()) throw NumericalError("Hamiltonian fundamental matrix is not finite");

  const Mat matching = xi_T_.block(n, 0, n, n) + xi_T_.block(n, n, n, n);
  matching_lu_.compute(matching);
  const Mat inv = matching_lu_.inverse();
  matching_cond_ = matching.lpNorm<1>() * inv.lpNorm<1>();
  if (!inv.allFinite() || !std::isfinite(matching_cond_) || matching_cond_ > 1e15) {
    std::ostringstream os;
    os << "boundary matching matrix is singular (condition estimate " << matching_cond_ << ")";
    throw NumericalError(os.str());
  }
}

Mat LQKernel::cumulative_m_between(int node, double t) const {
  const auto& s = system();
  const double a = grid()[node];
  auto f = [&](double tau) {
    const Mat pinv = st_.from_origin_inverse(tau);
    return Mat(pinv * input_weight(s, tau) * pinv.transpose());
  };
  const Mat inc = (t - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + t)) + f(t));
  return symmetrized(m_nodes_[static_cast<std::size_t>(node)] + inc);
}

// exp([[-A, S], [0, A^T]] t) = [[F, G], [0, *]] with M(t) = G F^T.
Mat LQKernel::van_loan_m(double t) const {
  const int n = state_dim();
  const Mat e = expm(*van_loan_generator_ * t);
  return symmetrized(e.topRightCorner(n, n) * e.topLeftCorner(n, n).transpose());
}

Mat LQKernel::input_gramian_at(double t) const {
  if (mode_ != KernelMode::kZeroQ) throw UnsupportedModeError("M(t) is only defined in ZeroQ mode");
  system().check_time(t);
  t = std::clamp(t, 0.0, horizon());
  int i = 0;
  if (grid().is_node(t, &i)) return m_nodes_[static_cast<std::size_t>(i)];
  if (van_loan_generator_) return van_loan_m(t);
  return cumulative_m_between(grid().nearest(t), t);
}

Mat LQKernel::xi_at(double t) const {
  int i = 0;
  if (grid().is_node(t, &i)) return xi_nodes_[static_cast<std::size_t>(i)];
  if (hamiltonian_generator_) return expm(*hamiltonian_generator_ * t);
  const auto& s = system();
  auto coeff = [&s](double tau) { return hamiltonian(s, tau); };
  i = grid().nearest(t);
  return detail::rk4_linear_step(coeff, grid()[i], xi_nodes_[static_cast<std::size_t>(i)],
                                 t - grid()[i]);
}

TimeFactors LQKernel::factors(double t) const {
  system().check_time(t);
  TimeFactors f;
  f.t = std::clamp(t, 0.0, horizon());
  f.phi = st_.from_origin(f.t);
  if (mode_ == KernelMode::kZeroQ) {
    f.m = input_gramian_at(f.t);
    return f;
  }
  const int n = state_dim();
  f.xi = xi_at(f.t);
  const Mat psi_t = f.xi.topLeftCorner(2 * n, 2 * n);
  const Mat ya_t = f.xi.block(0, 2 * n, 2 * n, n);
  const Mat phi_t_tr = f.phi.transpose();
  const Mat d0 = phi_t_tr - phi_T_.transpose();
  f.beyond = psi_t.partialPivLu().solve(ya_t * phi_t_tr);

  // Particular solution at s = T.
  const Mat ya_T = xi_T_.block(0, 2 * n, 2 * n, n);
  Mat yp_T = -ya_T * phi_T_.transpose();
  if (f.t >= horizon()) {
    yp_T += ya_T * phi_t_tr;
  } else {
    yp_T += xi_T_.topLeftCorner(2 * n, 2 * n) * f.beyond;
  }
  const Mat rhs = Mat::Identity(n, n) - xi_T_.block(n, 0, n, n) * d0 - yp_T.bottomRows(n);
  const Mat x = matching_lu_.solve(rhs);
  f.column.resize(2 * n, n);
  f.column.topRows(n) = x + d0;
  f.column.bottomRows(n) = x;
  return f;
}

Mat LQKernel::k(const TimeFactors& s, const TimeFactors& t) const {
  if (mode_ == KernelMode::kZeroQ) {
    const Mat& m = (s.t <= t.t) ? s.m : t.m;
    Mat inner = m;
    inner.diagonal().array() += 1.0;
    return s.phi * inner * t.phi.transpose();
  }
  const int n = state_dim();
  const auto psi1 = s.xi.topLeftCorner(n, 2 * n);
  const auto ya1 = s.xi.block(0, 2 * n, n, n);
  Mat out = psi1 * t.column - ya1 * phi_T_.transpose();
  if (s.t <= t.t) {
    out += ya1 * t.phi.transpose();
  } else {
    out += psi1 * t.beyond;
  }
  return out;
}

Mat LQKernel::k(double s, double t) const { return k(factors(s), factors(t)); }

Mat LQKernel::k0(double s, double t) const {
  return st_.from_origin(s) * st_.from_origin(t).transpose();
}

Mat LQKernel::k1(double s, double t) const {
  if (mode_ != KernelMode::kZeroQ) throw UnsupportedModeError("K1 is only defined in ZeroQ mode");
  system().check_time(s);
  system().check_time(t);
  return st_.from_origin(s) * input_gramian_at(std::min(s, t)) * st_.from_origin(t).transpose();
}

GramianResult LQKernel::gramian() const {
  const auto& s = system();
  const int n = s.state_dim();
  const int m = s.input_dim();
  const LinearSystem unit = s.with_R(MatrixFunction::constant(Mat::Identity(m, m)))
                                .with_Q(MatrixFunction::constant(Mat::Zero(n, n)));
  const LQKernel aux(unit, grid().size(), KernelMode::kZeroQ);
  GramianResult out;
  out.gramian = symmetrized(aux.k1(s.horizon(), s.horizon()));
  Eigen::SelfAdjointEigenSolver<Mat> eig(out.gramian, Eigen::EigenvaluesOnly);
  out.eigenvalues = eig.eigenvalues();
  const double top = out.eigenvalues.maxCoeff();
  out.invertible = top > 0.0 && out.eigenvalues.minCoeff() > 1e-10 * top;
  return out;
}

double LQKernel::gamma_k() const {
  std::call_once(gamma_once_, [this] {
    const auto& g = grid();
    std::vector<double> tops(static_cast<std::size_t>(g.size()));
    detail::parallel_for(g.size(), [&](int i) {
      const TimeFactors f = factors(g[i]);
      Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrized(k(f, f)), Eigen::EigenvaluesOnly);
      tops[static_cast<std::size_t>(i)] = eig.eigenvalues().maxCoeff();
    });
    gamma_ = std::sqrt(std::max(0.0, *std::max_element(tops.begin(), tops.end())));
  });
  return gamma_;
}

double LQKernel::transversality_check(const std::function<Vec(const Vec&)>& grad_g,
                                      const Vec& p_T) const {
  if (mode_ != KernelMode::kZeroQ) {
    throw UnsupportedModeError("transversality check is only available in ZeroQ mode");
  }
  if (p_T.size() != state_dim()) throw UsageError("p_T has the wrong dimension");
  const Mat k1T = k1(horizon(), horizon());
  const Vec grad = grad_g(k1T * p_T);
  if (grad.size() != state_dim()) throw UsageError("gradient has the wrong dimension");
  return (k1T * (grad + p_T)).norm();
}

// ---------------------------------------------------------------------------
// RepresenterFunction

RepresenterFunction::RepresenterFunction(std::shared_ptr<const LQKernel> kernel)
    : kernel_(std::move(kernel)) {
  if (!kernel_) throw UsageError("representer function needs a kernel");
}

RepresenterFunction::RepresenterFunction(std::shared_ptr<const LQKernel> kernel,
                                         std::vector<double> times,
                                         std::vector<Vec> coefficients)
    : RepresenterFunction(std::move(kernel)) {
  if (times.size() != coefficients.size()) {
    throw UsageError("one coefficient vector per atom time is required");
  }
  for (std::size_t i = 0; i < times.size(); ++i) add(times[i], std::move(coefficients[i]));
}

void RepresenterFunction::add(double t, Vec p) {
  kernel_->system().check_time(t);
  if (p.size() != kernel_->state_dim()) throw UsageError("coefficient has the wrong dimension");
  times_.push_back(std::clamp(t, 0.0, kernel_->horizon()));
  coeffs_.push_back(std::move(p));
}

Vec RepresenterFunction::eval(double t) const {
  const double times[] = {t};
  return eval_many(times).front();
}

std::vector<Vec> RepresenterFunction::eval_many(std::span<const double> times) const {
  std::vector<TimeFactors> points(times.size());
  detail::parallel_for(static_cast<int>(times.size()), [&](int i) {
    points[static_cast<std::size_t>(i)] = kernel_->factors(times[static_cast<std::size_t>(i)]);
  });
  return eval_at(points);
}

std::vector<Vec> RepresenterFunction::eval_at(std::span<const TimeFactors> points) const {
  const auto& kern = *kernel_;
  const int n = kern.state_dim();
  std::vector<Vec> out(points.size(), Vec::Zero(n));
  if (times_.empty()) return out;
  std::vector<TimeFactors> atoms;
  atoms.reserve(times_.size());
  for (double t : times_) atoms.push_back(kern.factors(t));

  if (kern.mode() == KernelMode::kZeroQ) {
    // Sorted atoms with prefix sums of M(t_b) g_b and suffix sums of g_b,
    // g_b = Phi(t_b,0)^T p_b.
    std::vector<std::size_t> order(times_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return times_[a] < times_[b]; });
    const std::size_t na = order.size();
    std::vector<double> sorted_t(na);
    std::vector<Vec> prefix(na + 1, Vec::Zero(n));
    std::vector<Vec> suffix(na + 1, Vec::Zero(n));
    std::vector<Vec> g(na);
    for (std::size_t k = 0; k < na; ++k) {
      const auto b = order[k];
      sorted_t[k] = times_[b];
      g[k] = atoms[b].phi.transpose() * coeffs_[b];
      prefix[k + 1] = prefix[k] + atoms[b].m * g[k];
    }
    for (std::size_t k = na; k-- > 0;) suffix[k] = suffix[k + 1] + g[k];
    detail::parallel_for(static_cast<int>(points.size()), [&](int i) {
      const TimeFactors& f = points[static_cast<std::size_t>(i)];
      const auto k = static_cast<std::size_t>(
          std::upper_bound(sorted_t.begin(), sorted_t.end(), f.t) - sorted_t.begin());
      out[static_cast<std::size_t>(i)] = f.phi * (suffix[0] + prefix[k] + f.m * suffix[k]);
    });
    return out;
  }

  detail::parallel_for(static_cast<int>(points.size()), [&](int i) {
    const TimeFactors& f = points[static_cast<std::size_t>(i)];
    Vec acc = Vec::Zero(n);
    for (std::size_t b = 0; b < atoms.size(); ++b) acc += kern.k(f, atoms[b]) * coeffs_[b];
    out[static_cast<std::size_t>(i)] = acc;
  });
  return out;
}

std::vector<Vec> RepresenterFunction::control_many(std::span<const double> times,
                                                   bool right_limit) const {
  const auto& kern = *kernel_;
  if (kern.mode() != KernelMode::kZeroQ) {
    throw UnsupportedModeError("control reconstruction is not available in GeneralQ mode");
  }
  const auto& sys = kern.system();
  const int n = kern.state_dim();
  const double tol = 1e-12 * std::max(1.0, kern.horizon());

  std::vector<std::size_t> order(times_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times_[a] < times_[b]; });
  const std::size_t na = order.size();
  std::vector<double> sorted_t(na);
  std::vector<Vec> suffix(na + 1, Vec::Zero(n));
  for (std::size_t k = na; k-- > 0;) {
    const auto b = order[k];
    sorted_t[k] = times_[b];
    suffix[k] = suffix[k + 1] +
                kern.transition().from_origin(times_[b]).transpose() * coeffs_[b];
  }

  std::vector<Vec> out(times.size());
  detail::parallel_for(static_cast<int>(times.size()), [&](int i) {
    const double s = times[static_cast<std::size_t>(i)];
    sys.check_time(s);
    // Atoms contributing at s: t_b >= s (left limit) or t_b > s (right limit).
    const double cut = right_limit ? s + tol : s - tol;
    const auto k = static_cast<std::size_t>(
        std::lower_bound(sorted_t.begin(), sorted_t.end(), cut) - sorted_t.begin());
    const Mat r = sys.R()(s);
    const Mat b = sys.B()(s);
    const Vec adj = kern.transition().from_origin_inverse(std::clamp(s, 0.0, kern.horizon()))
                        .transpose() * suffix[k];
    out[static_cast<std::size_t>(i)] = r.llt().solve(b.transpose() * adj);
  });
  return out;
}

Vec RepresenterFunction::control_impl(double s, bool include_at_s) const {
  const double times[] = {s};
  return control_many(times, !include_at_s).front();
}

Vec RepresenterFunction::control_of(double s) const { return control_impl(s, true); }

Vec RepresenterFunction::control_right(double s) const { return control_impl(s, false); }

double RepresenterFunction::inner(const RepresenterFunction& other) const {
  if (kernel_ != other.kernel_) throw UsageError("inner product of functions from different kernels");
  const auto& kern = *kernel_;
  std::vector<TimeFactors> mine;
  std::vector<TimeFactors> theirs;
  for (double t : times_) mine.push_back(kern.factors(t));
  for (double t : other.times_) theirs.push_back(kern.factors(t));
  double acc = 0.0;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    for (std::size_t j = 0; j < theirs.size(); ++j) {
      acc += coeffs_[i].dot(kern.k(mine[i], theirs[j]) * other.coeffs_[j]);
    }
  }
  return acc;
}

double RepresenterFunction::norm() const { return std::sqrt(std::max(0.0, inner(*this))); }

void write_kernel_table(std::ostream& out, const LQKernel& kernel, std::span<const double> times) {
  const int n = kernel.state_dim();
  out << "s,t";
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) out << ",k_" << i << '_' << j;
  }
  out << '\n';
  std::vector<TimeFactors> f;
  for (double t : times) f.push_back(kernel.factors(t));
  for (std::size_t a = 0; a < f.size(); ++a) {
    for (std::size_t b = 0; b < f.size(); ++b) {
      const Mat blk = kernel.k(f[a], f[b]);
      out << detail::fmt(times[a]) << ',' << detail::fmt(times[b]);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) out << ',' << detail::fmt(blk(i, j));
      }
      out << '\n';
    }
  }
}

}  // namespace lqk
