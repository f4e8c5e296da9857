#include "lqk/linsys.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lqk/detail/rk4.hpp"

namespace lqk {

namespace {

double time_slack(double horizon) { return 1e-12 * std::max(1.0, horizon); }

bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------
// MatrixFunction

MatrixFunction MatrixFunction::constant(Mat value) {
  MatrixFunction f;
  f.kind_ = Kind::kConstant;
  f.rows_ = value.rows();
  f.cols_ = value.cols();
  if (!all_finite(value)) throw UsageError("constant matrix has non-finite entries");
  f.value_ = std::move(value);
  return f;
}

MatrixFunction MatrixFunction::sampled(std::vector<double> times, std::vector<Mat> values) {
  if (times.empty() || times.size() != values.size()) {
    throw UsageError("sampled matrix function needs one value per sample time");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw UsageError("sample times must be strictly increasing");
    }
  }
  for (const auto& v : values) {
    if (v.rows() != values.front().rows() || v.cols() != values.front().cols()) {
      throw UsageError("sampled values must share one shape");
    }
    if (!all_finite(v)) throw UsageError("sampled matrix has non-finite entries");
  }
  MatrixFunction f;
  f.kind_ = Kind::kSampled;
  f.rows_ = values.front().rows();
  f.cols_ = values.front().cols();
  f.times_ = std::move(times);
  f.values_ = std::move(values);
  return f;
}

MatrixFunction MatrixFunction::callable(Eigen::Index rows, Eigen::Index cols,
                                        std::function<Mat(double)> fn) {
  if (!fn) throw UsageError("callable matrix function is empty");
  MatrixFunction f;
  f.kind_ = Kind::kCallable;
  f.rows_ = rows;
  f.cols_ = cols;
  f.fn_ = std::move(fn);
  return f;
}

Mat MatrixFunction::operator()(double t) const {
  switch (kind_) {
    case Kind::kConstant:
      return value_;
    case Kind::kSampled: {
      if (t <= times_.front()) return values_.front();
      if (t >= times_.back()) return values_.back();
      const auto it = std::upper_bound(times_.begin(), times_.end(), t);
      const auto j = static_cast<std::size_t>(it - times_.begin());
      const double w = (t - times_[j - 1]) / (times_[j] - times_[j - 1]);
      return (1.0 - w) * values_[j - 1] + w * values_[j];
    }
    case Kind::kCallable: {
      Mat m = fn_(t);
      if (m.rows() != rows_ || m.cols() != cols_) {
        throw UsageError("callable matrix function returned the wrong shape");
      }
      return m;
    }
  }
  return {};
}

bool MatrixFunction::is_zero() const {
  return kind_ == Kind::kConstant && (value_.size() == 0 || value_.isZero(0.0));
}

const Mat& MatrixFunction::constant_value() const {
  if (kind_ != Kind::kConstant) throw UsageError("matrix function is not constant");
  return value_;
}

// ---------------------------------------------------------------------------
// UniformGrid

UniformGrid::UniformGrid(double horizon, int points) : horizon_(horizon), points_(points) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw UsageError("horizon must be positive");
  if (points < 3 || points % 2 == 0) {
    throw UsageError("grid needs an odd number of points (>= 3) for Simpson quadrature");
  }
  step_ = horizon / (points - 1);
}

double UniformGrid::operator[](int i) const {
  if (i == points_ - 1) return horizon_;
  return i * step_;
}

int UniformGrid::nearest(double t) const {
  const long i = std::lround(t / step_);
  return static_cast<int>(std::clamp<long>(i, 0, points_ - 1));
}

bool UniformGrid::is_node(double t, int* index) const {
  const int i = nearest(t);
  const bool hit = std::abs(t - (*this)[i]) <= 1e-12 * std::max(1.0, horizon_);
  if (hit && index != nullptr) *index = i;
  return hit;
}

std::vector<double> UniformGrid::refined(int factor) const {
  if (factor < 1) throw UsageError("refinement factor must be >= 1");
  const int n = (points_ - 1) * factor + 1;
  std::vector<double> out(static_cast<std::size_t>(n));
  const double h = horizon_ / (n - 1);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i * h;
  out.back() = horizon_;
  return out;
}

// ---------------------------------------------------------------------------
// LinearSystem

LinearSystem::LinearSystem(MatrixFunction a, MatrixFunction b, MatrixFunction q, MatrixFunction r,
                           double horizon, double declared_r)
    : a_(std::move(a)),
      b_(std::move(b)),
      q_(std::move(q)),
      r_(std::move(r)),
      horizon_(horizon),
      declared_r_(declared_r) {
  if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) throw UsageError("horizon must be positive");
  const auto n = a_.rows();
  if (n == 0 || a_.cols() != n) throw UsageError("A must be square and non-empty");
  if (b_.rows() != n || b_.cols() == 0) throw UsageError("B must have N rows and M >= 1 columns");
  if (q_.rows() != n || q_.cols() != n) throw UsageError("Q must be N x N");
  if (r_.rows() != b_.cols() || r_.cols() != b_.cols()) throw UsageError("R must be M x M");
  if (declared_r_ < 0.0) throw UsageError("declared r must be non-negative");
}

bool LinearSystem::time_invariant() const {
  return a_.is_constant() && b_.is_constant() && r_.is_constant();
}

LinearSystem LinearSystem::with_R(MatrixFunction r) const {
  return LinearSystem(a_, b_, q_, std::move(r), horizon_, 0.0);
}

LinearSystem LinearSystem::with_Q(MatrixFunction q) const {
  return LinearSystem(a_, b_, std::move(q), r_, horizon_, declared_r_);
}

void LinearSystem::check_time(double t) const {
  const double eps = time_slack(horizon_);
  if (!(t >= -eps && t <= horizon_ + eps)) {
    std::ostringstream os;
    os << "time " << t << " outside [0, " << horizon_ << "]";
    throw DomainError(os.str());
  }
}

ValidationReport validate(const LinearSystem& sys, const MatrixFunction* c,
                          const MatrixFunction* d, int samples) {
  ValidationReport rep;
  samples = std::max(samples, 2);
  const double T = sys.horizon();
  rep.min_r_eigenvalue = std::numeric_limits<double>::infinity();
  rep.min_q_eigenvalue = std::numeric_limits<double>::infinity();
  for (int k = 0; k < samples; ++k) {
    const double t = T * k / (samples - 1);
    const Mat r = sys.R()(t);
    const Mat rs = 0.5 * (r + r.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> er(rs, Eigen::EigenvaluesOnly);
    rep.min_r_eigenvalue = std::min(rep.min_r_eigenvalue, er.eigenvalues().minCoeff());
    const Mat q = sys.Q()(t);
    rep.max_q_asymmetry = std::max(rep.max_q_asymmetry, (q - q.transpose()).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Mat> eq(0.5 * (q + q.transpose()), Eigen::EigenvaluesOnly);
    rep.min_q_eigenvalue = std::min(rep.min_q_eigenvalue, eq.eigenvalues().minCoeff());
    if (!sys.A()(t).allFinite() || !sys.B()(t).allFinite() || !r.allFinite() || !q.allFinite()) {
      rep.failures.emplace_back("non-finite system data at t=" + std::to_string(t));
      break;
    }
  }

  const double r_floor = sys.declared_r();
  const double r_tol = 1e-12 * std::max(1.0, std::abs(r_floor));
  if (!(rep.min_r_eigenvalue > 0.0)) {
    rep.failures.emplace_back("r-positivity violated: min eigenvalue of R is " +
                              std::to_string(rep.min_r_eigenvalue));
  } else if (r_floor > 0.0 && rep.min_r_eigenvalue < r_floor - r_tol) {
    rep.failures.emplace_back("R - r Id is not positive semidefinite");
  }
  const double q_scale = std::max(1.0, std::abs(rep.min_q_eigenvalue));
  if (rep.max_q_asymmetry > 1e-12 * q_scale) rep.failures.emplace_back("Q is not symmetric");
  if (rep.min_q_eigenvalue < -1e-12 * q_scale) {
    rep.failures.emplace_back("Q is not positive semidefinite");
  }

  if (c != nullptr) {
    if (c->cols() != sys.state_dim()) rep.failures.emplace_back("C must have N columns");
    if (d != nullptr && (d->rows() != c->rows() || d->cols() != 1)) {
      rep.failures.emplace_back("d must be a P-vector matching the rows of C");
    }
  } else if (d != nullptr) {
    rep.failures.emplace_back("d given without C");
  }
  rep.ok = rep.failures.empty();
  return rep;
}

// ---------------------------------------------------------------------------
// StateTransition

Mat expm(const Mat& m) { return m.exp(); }

StateTransition::StateTransition(LinearSystem sys, int grid_points)
    : sys_(std::move(sys)),
      grid_(sys_.horizon(), grid_points),
      exact_(sys_.A().is_constant()) {
  const int n = sys_.state_dim();
  phi_.resize(static_cast<std::size_t>(grid_.size()));
  phi_inv_.resize(phi_.size());
  if (exact_) {
    const Mat& a = sys_.A().constant_value();
    for (int i = 0; i < grid_.size(); ++i) {
      phi_[i] = expm(a * grid_[i]);
      phi_inv_[i] = expm(-a * grid_[i]);
    }
    return;
  }
  const auto& a_fn = sys_.A();
  phi_[0] = Mat::Identity(n, n);
  phi_inv_[0] = Mat::Identity(n, n);
  for (int i = 1; i < grid_.size(); ++i) {
    const double t0 = grid_[i - 1];
    phi_[i] = detail::rk4_linear_step(a_fn, t0, phi_[i - 1], grid_[i] - t0);
    Eigen::PartialPivLU<Mat> lu(phi_[i]);
    phi_inv_[i] = lu.inverse();
    if (!phi_[i].allFinite() || !phi_inv_[i].allFinite()) {
      throw NumericalError("state-transition matrix became singular or non-finite");
    }
  }
}

Mat StateTransition::from_origin(double t) const {
  sys_.check_time(t);
  int i = 0;
  if (grid_.is_node(t, &i)) return phi_[i];
  if (exact_) return expm(sys_.A().constant_value() * t);
  i = grid_.nearest(t);
  return detail::rk4_linear_step(sys_.A(), grid_[i], phi_[i], t - grid_[i]);
}

Mat StateTransition::from_origin_inverse(double t) const {
  sys_.check_time(t);
  int i = 0;
  if (grid_.is_node(t, &i)) return phi_inv_[i];
  if (exact_) return expm(-sys_.A().constant_value() * t);
  const Mat phi = from_origin(t);
  Eigen::FullPivLU<Mat> lu(phi);
  if (!lu.isInvertible()) throw NumericalError("singular state-transition factor");
  return lu.inverse();
}

Mat StateTransition::operator()(double t, double s) const {
  sys_.check_time(t);
  sys_.check_time(s);
  if (exact_) return expm(sys_.A().constant_value() * (t - s));
  return from_origin(t) * from_origin_inverse(s);
}

// ---------------------------------------------------------------------------
// SampledControl and propagation

SampledControl::SampledControl(std::vector<double> times, std::vector<Vec> values)
    : times_(std::move(times)), values_(std::move(values)) {
  if (times_.empty() || times_.size() != values_.size()) {
    throw UsageError("control needs one value per sample time");
  }
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (times_[i] < times_[i - 1]) throw UsageError("control times must be nondecreasing");
    if (values_[i].size() != values_.front().size()) {
      throw UsageError("control samples must share one dimension");
    }
  }
}

SampledControl SampledControl::constant(const Vec& value, double horizon) {
  return SampledControl({0.0, horizon}, {value, value});
}

Vec SampledControl::operator()(double t) const {
  if (t <= times_.front()) return values_.front();
  if (t >= times_.back()) return values_.back();
  // Last entry with time <= t gives the right limit at jumps.
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const auto j = static_cast<std::size_t>(it - times_.begin());
  const double a = times_[j - 1];
  const double b = times_[j];
  const double w = (t - a) / (b - a);
  return (1.0 - w) * values_[j - 1] + w * values_[j];
}

namespace {

// Integrates Phi(tau,0)^{-1} B(tau) u(tau) over [a, b] with u linear between
// ua (at a) and ub (at b), using composite Simpson at master-grid resolution.
Vec integrate_forcing(const StateTransition& st, double a, double b, const Vec& ua,
                      const Vec& ub) {
  const auto& sys = st.system();
  const int n = sys.state_dim();
  Vec acc = Vec::Zero(n);
  if (!(b > a)) return acc;
  const double h_master = st.grid().step();
  const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / h_master - 1e-9)));
  const double h = (b - a) / pieces;
  auto f = [&](double tau) -> Vec {
    const double w = (tau - a) / (b - a);
    const Vec u = (1.0 - w) * ua + w * ub;
    return st.from_origin_inverse(tau) * (sys.B()(tau) * u);
  };
  Vec left = f(a);
  for (int k = 0; k < pieces; ++k) {
    const double t0 = a + k * h;
    const double t1 = (k + 1 == pieces) ? b : t0 + h;
    const Vec mid = f(0.5 * (t0 + t1));
    const Vec right = f(t1);
    acc += (t1 - t0) / 6.0 * (left + 4.0 * mid + right);
    left = right;
  }
  return acc;
}

}  // namespace

std::vector<Vec> propagate(const StateTransition& st, const Vec& x0, const SampledControl& u,
                           std::span<const double> times) {
  const auto& sys = st.system();
  if (x0.size() != sys.state_dim()) throw UsageError("x0 has the wrong dimension");
  if (u.values().front().size() != sys.input_dim()) {
    throw UsageError("control has the wrong dimension");
  }
  std::vector<Vec> out;
  out.reserve(times.size());
  if (times.empty()) return out;
  const double eps = time_slack(sys.horizon());
  const auto& ct = u.times();
  const auto& cv = u.values();
  for (std::size_t k = 0; k < times.size(); ++k) {
    sys.check_time(times[k]);
    if (k > 0 && times[k] < times[k - 1]) throw UsageError("output times must be nondecreasing");
  }
  if (ct.front() > eps || ct.back() < times.back() - eps) {
    throw UsageError("control samples do not cover the propagation interval");
  }

  Vec acc = Vec::Zero(sys.state_dim());
  double pos = 0.0;
  std::size_t j = 0;  // current piece is [ct[j], ct[j+1]]
  auto advance_piece = [&]() {
    while (j + 1 < ct.size() && ct[j + 1] <= pos) ++j;
  };
  for (double t_out : times) {
    t_out = std::clamp(t_out, 0.0, sys.horizon());
    while (pos < t_out) {
      advance_piece();
      if (j + 1 >= ct.size()) break;
      const double a = ct[j];
      const double b = ct[j + 1];
      const double end = std::min(b, t_out);
      const double w0 = (pos - a) / (b - a);
      const double w1 = (end - a) / (b - a);
      const Vec u0 = (1.0 - w0) * cv[j] + w0 * cv[j + 1];
      const Vec u1 = (1.0 - w1) * cv[j] + w1 * cv[j + 1];
      acc += integrate_forcing(st, pos, end, u0, u1);
      pos = end;
    }
    out.push_back(st.from_origin(t_out) * (x0 + acc));
  }
  return out;
}

Vec propagate(const StateTransition& st, const Vec& x0, const SampledControl& u, double t) {
  const double times[] = {t};
  return propagate(st, x0, u, std::span<const double>(times, 1)).front();
}

}  // namespace lqk
