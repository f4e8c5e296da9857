#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the library: closed forms, textbook integrators and brute-force quadrature.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// exp(M) by truncated Taylor series after scaling by 2^-s, then squaring.
inline Mat taylor_expm(const Mat& m) {
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  while (norm / std::pow(2.0, s) > 0.25) ++s;
  const Mat a = m / std::pow(2.0, s);
  Mat term = Mat::Identity(m.rows(), m.cols());
  Mat sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * a / k;
    sum += term;
  }
  for (int k = 0; k < s; ++k) sum = sum * sum;
  return sum;
}

// Adaptive RK45 (Dormand-Prince) for y' = f(t, y) from t0 to t1.
inline Vec dopri(const std::function<Vec(double, const Vec&)>& f, double t0, double t1, Vec y,
                 double rtol = 1e-12, double atol = 1e-14) {
  static const double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1, 1};
  static const double a[7][6] = {{0},
                                 {1.0 / 5},
                                 {3.0 / 40, 9.0 / 40},
                                 {44.0 / 45, -56.0 / 15, 32.0 / 9},
                                 {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
                                 {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
                                  -5103.0 / 18656},
                                 {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
                                  11.0 / 84}};
  static const double b5[7] = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
                               11.0 / 84, 0};
  static const double b4[7] = {5179.0 / 57600, 0, 7571.0 / 16695, 393.0 / 640,
                               -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
  double t = t0;
  double h = (t1 - t0) / 100.0;
  if (h == 0.0) return y;
  std::vector<Vec> k(7);
  while (t < t1) {
    if (t + h > t1) h = t1 - t;
    for (int i = 0; i < 7; ++i) {
      Vec yi = y;
      for (int j = 0; j < i; ++j) yi += h * a[i][j] * k[j];
      k[i] = f(t + c[i] * h, yi);
    }
    Vec y5 = y, y4 = y;
    for (int i = 0; i < 7; ++i) {
      y5 += h * b5[i] * k[i];
      y4 += h * b4[i] * k[i];
    }
    const double scale = atol + rtol * std::max(y.cwiseAbs().maxCoeff(), y5.cwiseAbs().maxCoeff());
    const double err = (y5 - y4).cwiseAbs().maxCoeff() / scale;
    if (err <= 1.0) {
      t += h;
      y = y5;
    }
    h *= std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
  }
  return y;
}

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
struct GaussRule {
  std::vector<double> x, w;
};

inline GaussRule gauss_legendre(int n) {
  GaussRule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (x * p1 - p0) / (x * x - 1.0);
    r.x[i] = x;
    r.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

// int_a^b f over the pieces delimited by sorted breakpoints, with an n-point
// Gauss rule per piece.
inline double integrate(const std::function<double(double)>& f, std::vector<double> breaks,
                        int n = 20) {
  std::sort(breaks.begin(), breaks.end());
  static thread_local GaussRule rule;
  if (static_cast<int>(rule.x.size()) != n) rule = gauss_legendre(n);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double a = breaks[k], b = breaks[k + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int i = 0; i < n; ++i) acc += half * rule.w[i] * f(mid + half * rule.x[i]);
  }
  return acc;
}

// Double integrator x'' = u: Phi(t, 0), K0, K1 (R = 1) in closed form.
inline Mat double_integrator_phi(double t) {
  Mat p(2, 2);
  p << 1, t, 0, 1;
  return p;
}

inline Mat double_integrator_k0(double s, double t) {
  Mat k(2, 2);
  k << 1 + s * t, s, t, 1;
  return k;
}

// int_0^min(s,t) Phi(s,tau) B B^T Phi(t,tau)^T dtau with B = [0, 1]^T.
inline Mat double_integrator_k1(double s, double t) {
  const double m = std::min(s, t);
  Mat k(2, 2);
  // Phi(s,tau) B = [s - tau, 1]^T.
  k(0, 0) = s * t * m - 0.5 * (s + t) * m * m + m * m * m / 3.0;
  k(0, 1) = s * m - 0.5 * m * m;
  k(1, 0) = t * m - 0.5 * m * m;
  k(1, 1) = m;
  return k;
}

// Scalar A = 0, B = 1, R = 1.
inline double scalar_k_zero_q(double s, double t) { return 1.0 + std::min(s, t); }

// Scalar A = 0, B = 1, R = 1, Q = 1 on [0, T].
inline double scalar_k_unit_q(double s, double t, double T) {
  return std::exp(std::min(s, t) - T) * std::cosh(T - std::max(s, t));
}

// Scalar A = 0, B = 1, R = 1, Q = 1: for fixed t, k(s) = K(s, t) solves the
// second-kind equation k(s) + int_0^T (1 + min(s, tau)) k(tau) dtau = 1 + min(s, t),
// obtained from the integral relations for K(t, 0) and U_t with Phi = 1.
// Nystrom discretization with the trapezoid rule on n uniform nodes; returns
// k at the nodes.
inline Vec nystrom_unit_q_column(double t, double T, int n) {
  const double h = T / (n - 1);
  Mat sys = Mat::Identity(n, n);
  Vec rhs(n);
  for (int i = 0; i < n; ++i) {
    const double s = i * h;
    rhs(i) = 1.0 + std::min(s, t);
    for (int j = 0; j < n; ++j) {
      const double w = (j == 0 || j == n - 1) ? 0.5 * h : h;
      sys(i, j) += w * (1.0 + std::min(s, j * h));
    }
  }
  return sys.partialPivLu().solve(rhs);
}

// rank of [B, AB, ..., A^{n-1}B] by SVD.
inline int kalman_rank(const Mat& a, const Mat& b, double tol = 1e-9) {
  const auto n = a.rows();
  Mat ctrb(n, n * b.cols());
  Mat blk = b;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * b.cols(), b.cols()) = blk;
    blk = a * blk;
  }
  Eigen::JacobiSVD<Mat> svd(ctrb);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol * std::max(1.0, sv(0))) ++rank;
  }
  return rank;
}

// minimize f^T x + x^T H x  s.t.  Aeq x = beq, Ain x <= bin, with H positive
// definite, by enumerating active sets and checking the KKT conditions of
// each. Exponential in the number of inequality rows; small problems only.
struct QPResult {
  bool feasible = false;
  Vec x;
  double objective = 0.0;
};

inline QPResult qp_by_enumeration(const Mat& h, const Vec& f, const Mat& aeq, const Vec& beq,
                                  const Mat& ain, const Vec& bin) {
  const auto n = h.rows();
  const auto me = aeq.rows();
  const auto mi = ain.rows();
  QPResult best;
  for (long mask = 0; mask < (1L << mi); ++mask) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < mi; ++i) {
      if (mask & (1L << i)) act.push_back(i);
    }
    const auto ma = static_cast<Eigen::Index>(act.size());
    Mat kkt = Mat::Zero(n + me + ma, n + me + ma);
    Vec rhs = Vec::Zero(n + me + ma);
    kkt.topLeftCorner(n, n) = 2.0 * h;
    rhs.head(n) = -f;
    kkt.block(0, n, n, me) = aeq.transpose();
    kkt.block(n, 0, me, n) = aeq;
    rhs.segment(n, me) = beq;
    for (Eigen::Index k = 0; k < ma; ++k) {
      kkt.block(0, n + me + k, n, 1) = ain.row(act[k]).transpose();
      kkt.block(n + me + k, 0, 1, n) = ain.row(act[k]);
      rhs(n + me + k) = bin(act[k]);
    }
    Eigen::FullPivLU<Mat> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Vec sol = lu.solve(rhs);
    const Vec x = sol.head(n);
    bool ok = (ain * x - bin).maxCoeff() <= 1e-9 * (1.0 + bin.cwiseAbs().maxCoeff());
    for (Eigen::Index k = 0; k < ma && ok; ++k) ok = sol(n + me + k) >= -1e-9;
    if (mi == 0) ok = true;
    if (!ok) continue;
    const double obj = f.dot(x) + x.dot(h * x);
    if (!best.feasible || obj < best.objective) best = {true, x, obj};
  }
  return best;
}

// Piecewise-linear scalar function through (knots[i], values[i]).
struct PiecewiseLinear {
  std::vector<double> knots, values;

  double operator()(double t) const {
    if (t <= knots.front()) return values.front();
    if (t >= knots.back()) return values.back();
    const auto it = std::upper_bound(knots.begin(), knots.end(), t);
    const auto j = static_cast<std::size_t>(it - knots.begin());
    const double w = (t - knots[j - 1]) / (knots[j] - knots[j - 1]);
    return (1.0 - w) * values[j - 1] + w * values[j];
  }

  // int_0^t of the function, exact.
  double integral(double t) const {
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < knots.size() && knots[j] < t; ++j) {
      const double b = std::min(knots[j + 1], t);
      acc += 0.5 * (b - knots[j]) * ((*this)(knots[j]) + (*this)(b));
    }
    return acc;
  }
};

inline PiecewiseLinear random_piecewise_linear(std::mt19937& rng, double horizon, int pieces) {
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  PiecewiseLinear f;
  for (int k = 0; k <= pieces; ++k) {
    f.knots.push_back(horizon * k / pieces);
    f.values.push_back(val(rng));
  }
  return f;
}

}  // namespace oracle
