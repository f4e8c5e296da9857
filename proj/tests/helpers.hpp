#pragma once

// Shared fixtures for the test suites (these do use the library).

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <random>

#include "lqk/kernel.hpp"
#include "lqk/linsys.hpp"
#include "oracles.hpp"

namespace fixtures {

using lqk::Mat;
using lqk::MatrixFunction;
using lqk::Vec;

inline Mat mat(std::initializer_list<std::initializer_list<double>> rows) {
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline MatrixFunction constant(const Mat& m) { return MatrixFunction::constant(m); }

/// x' = u on [0, T] with R = 1 and Q = q.
inline lqk::LinearSystem scalar_system(double q = 0.0, double horizon = 1.0) {
  return lqk::LinearSystem(constant(Mat::Zero(1, 1)), constant(Mat::Ones(1, 1)),
                           constant(Mat::Constant(1, 1, q)), constant(Mat::Ones(1, 1)), horizon);
}

/// x'' = u with R = 1, Q = 0.
inline lqk::LinearSystem double_integrator(double horizon = 1.0) {
  return lqk::LinearSystem(constant(mat({{0, 1}, {0, 0}})), constant(mat({{0}, {1}})),
                           constant(Mat::Zero(2, 2)), constant(Mat::Ones(1, 1)), horizon);
}

inline lqk::LinearSystem pendulum_system(double lambda_u = 1e4) {
  return lqk::LinearSystem(constant(mat({{0, 1, 0}, {-10, 0, 1}, {0, 0, 0}})),
                           constant(mat({{0}, {0}, {1}})), constant(Mat::Zero(3, 3)),
                           constant(Mat::Constant(1, 1, lambda_u)), 1.0, lambda_u);
}

/// A smooth time-varying two-state system used where constant data would be
/// too special.
inline lqk::LinearSystem time_varying_system(double horizon = 1.0) {
  auto a = MatrixFunction::callable(2, 2, [](double t) {
    return mat({{-0.5 + 0.3 * std::sin(2.0 * t), 1.0}, {-1.0, 0.2 * std::cos(t)}});
  });
  auto b = MatrixFunction::callable(2, 1, [](double t) { return mat({{0.1 * t}, {1.0}}); });
  auto r = MatrixFunction::callable(1, 1, [](double t) { return mat({{1.0 + 0.5 * t}}); });
  return lqk::LinearSystem(a, b, constant(Mat::Zero(2, 2)), r, horizon);
}

inline std::shared_ptr<const lqk::LQKernel> make_kernel(
    lqk::LinearSystem sys, int grid = 401, std::optional<lqk::KernelMode> mode = std::nullopt) {
  return std::make_shared<const lqk::LQKernel>(std::move(sys), grid, mode);
}

inline Vec random_vec(std::mt19937& rng, Eigen::Index n, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

inline Mat random_mat(std::mt19937& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  }
  return m;
}

/// Scalar x' = u trajectory with piecewise-linear u, x(0) = x0.
struct ScalarPath {
  double x0 = 0.0;
  oracle::PiecewiseLinear u;

  double x(double t) const { return x0 + u.integral(t); }
};

inline ScalarPath random_scalar_path(std::mt19937& rng, double horizon = 1.0) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  ScalarPath p;
  p.x0 = d(rng);
  p.u = oracle::random_piecewise_linear(rng, horizon, 10);
  return p;
}

/// d/ds K(s, t) for the scalar kernel by finite differences that stay inside
/// [a, b], where K(., t) is smooth.
inline double kernel_slope(const lqk::LQKernel& k, double s, double t, double a, double b) {
  const double h = std::min(1e-5, 0.25 * (b - a));
  auto f = [&](double x) { return k.k(x, t)(0, 0); };
  if (s - h >= a && s + h <= b) return (f(s + h) - f(s - h)) / (2.0 * h);
  if (s - h < a) return (-3.0 * f(s) + 4.0 * f(s + h) - f(s + 2.0 * h)) / (2.0 * h);
  return (3.0 * f(s) - 4.0 * f(s - h) + f(s - 2.0 * h)) / (2.0 * h);
}

/// <x, K(., t) p>_K for the scalar system A = 0, B = 1, R = 1, Q = q, by
/// Gauss quadrature of x(0) k(0) + int (q x k + u U) with U the control of
/// K(., t) p. ZeroQ kernels supply U directly; otherwise it is the slope of
/// K(., t) p (since A = 0 and B = 1).
inline double reproducing_inner(const std::shared_ptr<const lqk::LQKernel>& kernel,
                                const ScalarPath& path, double t, double p, double q) {
  const auto& kern = *kernel;
  const bool zero_q = kern.mode() == lqk::KernelMode::kZeroQ;
  lqk::RepresenterFunction atom(kernel, {t}, {Vec::Constant(1, p)});
  std::vector<double> breaks = path.u.knots;
  breaks.push_back(t);
  std::sort(breaks.begin(), breaks.end());
  static const auto rule = oracle::gauss_legendre(20);
  double acc = path.x0 * kern.k(0.0, t)(0, 0) * p;
  for (std::size_t j = 0; j + 1 < breaks.size(); ++j) {
    const double a = breaks[j], b = breaks[j + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
      const double s = mid + half * rule.x[i];
      const double ks = kern.k(s, t)(0, 0) * p;
      const double us = zero_q ? atom.control_of(s)(0) : kernel_slope(kern, s, t, a, b) * p;
      acc += half * rule.w[i] * (q * path.x(s) * ks + path.u(s) * us);
    }
  }
  return acc;
}

/// <f, g>_K = f(0)^T g(0) + int u_f^T R u_g by quadrature of the sampled
/// controls (ZeroQ kernels only).
inline double quadrature_inner(const lqk::RepresenterFunction& f, const lqk::RepresenterFunction& g) {
  const auto& kern = *f.kernel();
  std::vector<double> breaks{0.0, kern.horizon()};
  breaks.insert(breaks.end(), f.times().begin(), f.times().end());
  breaks.insert(breaks.end(), g.times().begin(), g.times().end());
  std::sort(breaks.begin(), breaks.end());
  double acc = f.eval(0.0).dot(g.eval(0.0));
  const auto& r = kern.system().R();
  acc += oracle::integrate(
      [&](double s) { return f.control_of(s).dot(r(s) * g.control_of(s)); }, breaks, 16);
  return acc;
}

}  // namespace fixtures
