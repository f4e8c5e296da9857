#include "lqk/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "lqk/detail/format.hpp"

namespace lqk {

RepresenterFunction to_representer(std::shared_ptr<const LQKernel> kernel,
                                   const SOCProgram& prog, const Vec& alpha) {
  if (alpha.size() != static_cast<Eigen::Index>(prog.basis.size())) {
    throw UsageError("coefficient vector does not match the basis");
  }
  RepresenterFunction f(std::move(kernel));
  for (std::size_t b = 0; b < prog.basis.size(); ++b) {
    const double a = alpha(static_cast<Eigen::Index>(b));
    if (a != 0.0) f.add(prog.basis[b].t, a * prog.basis[b].c);
  }
  return f;
}

SampledTrajectory reconstruct(std::shared_ptr<const LQKernel> kernel, const SOCProgram& prog,
                              const Vec& alpha, int dense_factor, bool with_controls) {
  if (dense_factor < 1) throw UsageError("dense factor must be at least 1");
  if (with_controls && kernel->mode() != KernelMode::kZeroQ) {
    throw UnsupportedModeError("control reconstruction is not available in GeneralQ mode");
  }
  const auto& sys = kernel->system();
  const double T = kernel->horizon();
  const double tol = 1e-12 * std::max(1.0, T);
  const RepresenterFunction f = to_representer(kernel, prog, alpha);

  // Merge the atom times into the dense grid, keeping atom times exact.
  std::vector<double> atoms = f.times();
  std::sort(atoms.begin(), atoms.end());
  atoms.erase(std::unique(atoms.begin(), atoms.end(),
                          [&](double a, double b) { return b - a <= tol; }),
              atoms.end());
  std::vector<double> base = kernel->grid().refined(dense_factor);
  std::vector<char> is_atom(base.size(), 0);
  {
    std::vector<double> merged;
    std::vector<char> flags;
    std::size_t k = 0;
    for (double t : base) {
      while (k < atoms.size() && atoms[k] < t - tol) {
        merged.push_back(atoms[k++]);
        flags.push_back(1);
      }
      if (k < atoms.size() && std::abs(atoms[k] - t) <= tol) {
        merged.push_back(atoms[k++]);
        flags.push_back(1);
      } else {
        merged.push_back(t);
        flags.push_back(0);
      }
    }
    base = std::move(merged);
    is_atom = std::move(flags);
  }

  const std::vector<Vec> states = f.eval_many(base);
  SampledTrajectory out;
  out.rkhs_norm = std::sqrt(std::max(0.0, alpha.dot(prog.gram * alpha)));

  std::vector<double> mids(base.size() > 0 ? base.size() - 1 : 0);
  for (std::size_t i = 0; i + 1 < base.size(); ++i) mids[i] = 0.5 * (base[i] + base[i + 1]);
  const std::vector<Vec> mid_states = f.eval_many(mids);

  auto quad_q = [&](double t, const Vec& x) { return x.dot(sys.Q()(t) * x); };
  if (!sys.zero_state_cost()) {
    for (std::size_t i = 0; i + 1 < base.size(); ++i) {
      out.state_q_sq += (base[i + 1] - base[i]) / 6.0 *
                        (quad_q(base[i], states[i]) + 4.0 * quad_q(mids[i], mid_states[i]) +
                         quad_q(base[i + 1], states[i + 1]));
    }
  }

  if (!with_controls) {
    out.times = base;
    out.states = states;
    return out;
  }

  const std::vector<Vec> left = f.control_many(base, false);
  const std::vector<Vec> right = f.control_many(base, true);
  const std::vector<Vec> mid_u = f.control_many(mids, false);
  auto quad_r = [&](double t, const Vec& u) { return u.dot(sys.R()(t) * u); };
  for (std::size_t i = 0; i + 1 < base.size(); ++i) {
    out.control_l2_sq += (base[i + 1] - base[i]) / 6.0 *
                         (quad_r(base[i], right[i]) + 4.0 * quad_r(mids[i], mid_u[i]) +
                          quad_r(base[i + 1], left[i + 1]));
  }

  for (std::size_t i = 0; i < base.size(); ++i) {
    const bool jump = is_atom[i] && (left[i] - right[i]).norm() > 1e-14 * (1.0 + left[i].norm());
    if (jump) {
      out.times.push_back(base[i]);
      out.states.push_back(states[i]);
      out.controls.push_back(left[i]);
    }
    out.times.push_back(base[i]);
    out.states.push_back(states[i]);
    out.controls.push_back(right[i]);
  }
  return out;
}

SampledTrajectory reconstruct(std::shared_ptr<const LQKernel> kernel, const SOCProgram& prog,
                              const Solution& sol, int dense_factor, bool with_controls) {
  return reconstruct(std::move(kernel), prog, sol.alpha, dense_factor, with_controls);
}

SampledControl sampled_control(const SampledTrajectory& traj) {
  if (traj.controls.empty()) throw UsageError("trajectory has no control samples");
  return SampledControl(traj.times, traj.controls);
}

double dynamics_mismatch(const StateTransition& st, const SampledTrajectory& traj) {
  if (traj.times.empty()) return 0.0;
  const std::vector<Vec> x = propagate(st, traj.states.front(), sampled_control(traj), traj.times);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, (x[i] - traj.states[i]).cwiseAbs().maxCoeff());
  }
  return worst;
}

Mat margins(const SampledTrajectory& traj, const ConstraintSpec& spec) {
  const int p = spec.count();
  Mat out(static_cast<Eigen::Index>(traj.times.size()), p);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const double t = traj.times[k];
    for (int i = 0; i < p; ++i) {
      out(static_cast<Eigen::Index>(k), i) = spec.bound(i, t) - spec.row(i, t).dot(traj.states[k]);
    }
  }
  return out;
}

FeasibilityReport audit(const SampledTrajectory& traj, const ConstraintSpec& spec) {
  FeasibilityReport rep;
  const int p = spec.count();
  rep.constraints.assign(static_cast<std::size_t>(p),
                         {-std::numeric_limits<double>::infinity(), 0.0});
  rep.max_violation = p > 0 ? -std::numeric_limits<double>::infinity() : 0.0;
  if (traj.times.empty()) return rep;
  const Mat m = margins(traj, spec);
  for (int i = 0; i < p; ++i) {
    auto& a = rep.constraints[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      if (-m(k, i) > a.max_violation) {
        a.max_violation = -m(k, i);
        a.argmax_time = traj.times[static_cast<std::size_t>(k)];
      }
    }
    rep.max_violation = std::max(rep.max_violation, a.max_violation);
  }
  rep.initial_state = traj.states.front();
  rep.terminal_state = traj.states.back();
  rep.state_max = rep.state_min = traj.states.front();
  for (const auto& x : traj.states) {
    rep.state_max = rep.state_max.cwiseMax(x);
    rep.state_min = rep.state_min.cwiseMin(x);
  }
  return rep;
}

CostReport cost_report(const SampledTrajectory& traj, const Solution& sol) {
  CostReport rep;
  if (!traj.states.empty()) rep.initial_sq = traj.states.front().squaredNorm();
  rep.state_cost = traj.state_q_sq;
  rep.control_cost = traj.control_l2_sq;
  rep.linear_cost = sol.linear_cost;
  rep.z_sq = sol.z * sol.z;
  rep.objective = sol.objective;
  const double quad = rep.initial_sq + rep.state_cost + rep.control_cost;
  const double diff = std::abs(quad - rep.z_sq);
  rep.relative_mismatch = diff == 0.0 ? 0.0 : diff / std::max(rep.z_sq, std::numeric_limits<double>::min());
  rep.mismatch = rep.relative_mismatch > kCostMismatchTol;
  return rep;
}

void write_trajectory_csv(std::ostream& out, const SampledTrajectory& traj,
                          const ConstraintSpec& spec) {
  const auto n = traj.states.empty() ? 0 : traj.states.front().size();
  const auto m = traj.controls.empty() ? 0 : traj.controls.front().size();
  const int p = spec.count();
  out << 't';
  for (Eigen::Index i = 1; i <= n; ++i) out << ",x_" << i;
  for (Eigen::Index i = 1; i <= m; ++i) out << ",u_" << i;
  for (int i = 1; i <= p; ++i) out << ",margin_" << i;
  out << '\n';
  const Mat marg = margins(traj, spec);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    out << detail::fmt(traj.times[k]);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << detail::fmt(traj.states[k](i));
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << detail::fmt(traj.controls[k](i));
    for (int i = 0; i < p; ++i) out << ',' << detail::fmt(marg(static_cast<Eigen::Index>(k), i));
    out << '\n';
  }
}

}  // namespace lqk
