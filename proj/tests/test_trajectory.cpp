#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "lqk/trajectory.hpp"

using namespace fixtures;
using lqk::LossKind;
using lqk::ProblemSpec;
using lqk::SolveStatus;

namespace {

// Pendulum with lambda_u = 1 and guaranteed eta: feasible from 100 intervals
// on, quick to solve, with active rows.
struct PendulumRun {
  std::shared_ptr<const lqk::LQKernel> kernel;
  ProblemSpec spec;
  lqk::SOCProgram prog;
  lqk::Solution sol;
};

ProblemSpec pendulum_problem() {
  ProblemSpec spec;
  spec.constraints = lqk::ConstraintSpec(constant(mat({{0, -1, 0}, {0, 0, 1}, {0, 0, -1}})),
                                         constant(mat({{3}, {10}, {10}})));
  spec.x0 = vec({0.5, 0.0, 0.0});
  spec.loss_points = {{1.0 / 3.0, Vec::Unit(3, 0), LossKind::kEquality, 0.5},
                      {1.0, Vec::Unit(3, 0), LossKind::kEquality, 0.0},
                      {1.0, Vec::Unit(3, 1), LossKind::kLinearCost, -1e6}};
  return spec;
}

const PendulumRun& pendulum_run(int intervals) {
  static std::map<int, PendulumRun> cache;
  auto it = cache.find(intervals);
  if (it != cache.end()) return it->second;
  PendulumRun r;
  r.kernel = make_kernel(pendulum_system(1.0), 401);
  r.spec = pendulum_problem();
  const auto tight = lqk::tighten(*r.kernel, r.spec.constraints,
                                  lqk::build_uniform_covering(1.0, intervals, 3));
  r.prog = lqk::assemble(r.spec, *r.kernel, tight);
  r.sol = lqk::solve(r.prog);
  return cache.emplace(intervals, std::move(r)).first->second;
}

// Double integrator representer with random atoms away from the ends.
struct RandomAtoms {
  std::shared_ptr<const lqk::LQKernel> kernel = make_kernel(double_integrator(), 201);
  lqk::SOCProgram prog;
  Vec alpha;
};

RandomAtoms random_atoms(std::mt19937& rng, int count) {
  RandomAtoms r;
  ProblemSpec spec;
  std::uniform_real_distribution<double> time(0.05, 0.95);
  for (int i = 0; i < count; ++i) {
    spec.loss_points.push_back({time(rng), random_vec(rng, 2), LossKind::kLinearCost, 1.0});
  }
  r.prog = lqk::assemble(spec, *r.kernel, {});
  r.alpha = random_vec(rng, r.prog.size());
  return r;
}

}  // namespace

TEST_SUITE("trajectory") {

TEST_CASE("zero coefficients") {
  const auto k = make_kernel(double_integrator(), 201);
  ProblemSpec spec;
  spec.x0 = Vec::Zero(2);
  spec.loss_points = {{0.5, Vec::Unit(2, 0), LossKind::kLinearCost, 1.0}};
  const auto prog = lqk::assemble(spec, *k, {});
  const auto traj = lqk::reconstruct(k, prog, Vec::Zero(prog.size()));
  REQUIRE(traj.states.size() == traj.times.size());
  REQUIRE(traj.controls.size() == traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    CHECK(traj.states[i].norm() == 0.0);
    CHECK(traj.controls[i].norm() == 0.0);
  }
  CHECK(traj.rkhs_norm == 0.0);
  lqk::Solution sol;
  sol.alpha = Vec::Zero(prog.size());
  const auto cost = lqk::cost_report(traj, sol);
  CHECK(cost.initial_sq == 0.0);
  CHECK(cost.state_cost == 0.0);
  CHECK(cost.control_cost == 0.0);
  CHECK(cost.linear_cost == 0.0);
  CHECK(cost.z_sq == 0.0);
  CHECK_FALSE(cost.mismatch);

  // d = 1 with an arbitrary bounded C: every margin is at least 1.
  const lqk::ConstraintSpec cs(
      lqk::MatrixFunction::callable(2, 2, [](double t) { return mat({{std::sin(9 * t), 3.0}, {-2.0, t}}); }),
      constant(Mat::Ones(2, 1)));
  const auto rep = lqk::audit(traj, cs);
  CHECK(rep.max_violation == doctest::Approx(-1.0));
  CHECK(rep.feasible());
  CHECK(lqk::margins(traj, cs).minCoeff() == doctest::Approx(1.0));
}

TEST_CASE("single atom on the scalar integrator") {
  // x(t) = (1 + min(t, t1)) alpha and u = alpha on [0, t1), 0 after.
  const auto k = make_kernel(scalar_system(), 201);
  ProblemSpec spec;
  const double t1 = 0.4, a = 2.0;
  spec.loss_points = {{t1, Vec::Ones(1), LossKind::kLinearCost, 1.0}};
  const auto prog = lqk::assemble(spec, *k, {});
  REQUIRE(prog.size() == 1);
  const auto traj = lqk::reconstruct(k, prog, Vec::Constant(1, a));
  bool seen_jump = false;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i];
    CHECK(traj.states[i](0) == doctest::Approx(a * oracle::scalar_k_zero_q(t, t1)).epsilon(1e-10));
    if (t < t1) CHECK(traj.controls[i](0) == doctest::Approx(a).epsilon(1e-10));
    if (t > t1) CHECK(std::abs(traj.controls[i](0)) < 1e-10);
    if (t == t1 && i + 1 < traj.times.size() && traj.times[i + 1] == t1) {
      CHECK(traj.controls[i](0) == doctest::Approx(a).epsilon(1e-10));
      CHECK(std::abs(traj.controls[i + 1](0)) < 1e-10);
      seen_jump = true;
    }
  }
  CHECK(seen_jump);
  // ||x||^2 = x(0)^2 + int u^2 = a^2 (1 + t1) = alpha G alpha.
  CHECK(traj.rkhs_norm * traj.rkhs_norm == doctest::Approx(a * a * (1.0 + t1)));
  CHECK(traj.control_l2_sq == doctest::Approx(a * a * t1).epsilon(1e-8));

  SUBCASE("audit finds the peak") {
    const lqk::ConstraintSpec cs(constant(mat({{1.0}})), constant(mat({{2.5}})));
    const auto rep = lqk::audit(traj, cs);
    REQUIRE(rep.constraints.size() == 1);
    CHECK(rep.max_violation == doctest::Approx(a * (1.0 + t1) - 2.5).epsilon(1e-10));
    CHECK(rep.constraints[0].argmax_time >= t1 - 1e-12);
    CHECK_FALSE(rep.feasible());
    CHECK(rep.terminal_state(0) == doctest::Approx(a * (1.0 + t1)));
    CHECK(rep.initial_state(0) == doctest::Approx(a));
    CHECK(rep.state_max(0) == doctest::Approx(a * (1.0 + t1)));
    CHECK(rep.state_min(0) == doctest::Approx(a));
    const Mat m = lqk::margins(traj, cs);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      CHECK(m(i, 0) == doctest::Approx(2.5 - traj.states[static_cast<std::size_t>(i)](0)));
    }
  }
}

TEST_CASE("dynamics consistency") {
  SUBCASE("propagated controls reproduce the states") {
    std::mt19937 rng(53);
    for (int trial = 0; trial < 5; ++trial) {
      const auto r = random_atoms(rng, 4);
      const auto traj = lqk::reconstruct(r.kernel, r.prog, r.alpha);
      CHECK(lqk::dynamics_mismatch(r.kernel->transition(), traj) <= 1e-5);
    }
    const auto& p = pendulum_run(100);
    REQUIRE(p.sol.status == SolveStatus::kOptimal);
    const auto traj = lqk::reconstruct(p.kernel, p.prog, p.sol);
    CHECK(lqk::dynamics_mismatch(p.kernel->transition(), traj) <= 1e-5);
  }
  SUBCASE("central differences converge at second order") {
    std::mt19937 rng(59);
    const auto r = random_atoms(rng, 3);
    const auto f = lqk::to_representer(r.kernel, r.prog, r.alpha);
    const auto& sys = r.kernel->system();
    auto residual = [&](double h) {
      double worst = 0.0;
      for (int i = 1; i < 40; ++i) {
        const double t = i / 40.0;
        bool near_atom = false;
        for (double ta : f.times()) near_atom = near_atom || std::abs(t - ta) < 2.0 * h;
        if (near_atom) continue;
        const Vec d = (f.eval(t + h) - f.eval(t - h)) / (2.0 * h);
        const Vec rhs = sys.A()(t) * f.eval(t) + sys.B()(t) * f.control_of(t);
        worst = std::max(worst, (d - rhs).cwiseAbs().maxCoeff());
      }
      return worst;
    };
    const double coarse = residual(1e-2), fine = residual(5e-3);
    CHECK(coarse > 0.0);
    CHECK(coarse / fine >= 3.5);
  }
  SUBCASE("samples agree with the representer") {
    std::mt19937 rng(61);
    const auto r = random_atoms(rng, 3);
    const auto f = lqk::to_representer(r.kernel, r.prog, r.alpha);
    const auto traj = lqk::reconstruct(r.kernel, r.prog, r.alpha, 4);
    for (std::size_t i = 0; i < traj.times.size(); i += 7) {
      CHECK((traj.states[i] - f.eval(traj.times[i])).norm() < 1e-12 * (1.0 + traj.states[i].norm()));
    }
    CHECK(traj.rkhs_norm == doctest::Approx(f.norm()).epsilon(1e-10));
    // Dense grid: 200 master intervals refined 4 times, plus doubled atom times.
    CHECK(traj.times.size() >= 801);
    CHECK(std::is_sorted(traj.times.begin(), traj.times.end()));
  }
}

TEST_CASE("uniform bound through gamma_K") {
  // sup_t |f(t)| <= gamma_K ||f||_K for differences of solutions and for
  // random representers.
  auto check = [](const lqk::RepresenterFunction& f) {
    const double gamma = f.kernel()->gamma_k();
    double sup = 0.0;
    for (int i = 0; i <= 2000; ++i) sup = std::max(sup, f.eval(i / 2000.0).norm());
    CHECK(sup <= gamma * f.norm() * (1.0 + 1e-6));
  };
  const auto& a = pendulum_run(100);
  const auto& b = pendulum_run(200);
  REQUIRE(a.sol.status == SolveStatus::kOptimal);
  REQUIRE(b.sol.status == SolveStatus::kOptimal);
  auto diff = lqk::to_representer(a.kernel, a.prog, a.sol.alpha);
  const auto fb = lqk::to_representer(b.kernel, b.prog, b.sol.alpha);
  for (std::size_t i = 0; i < fb.size(); ++i) diff.add(fb.times()[i], -fb.coefficients()[i]);
  check(diff);

  std::mt19937 rng(67);
  for (int trial = 0; trial < 10; ++trial) {
    const auto r = random_atoms(rng, 5);
    check(lqk::to_representer(r.kernel, r.prog, r.alpha));
  }
}

TEST_CASE("pendulum solution audit and costs") {
  const auto& p = pendulum_run(100);
  REQUIRE(p.sol.status == SolveStatus::kOptimal);
  const auto traj = lqk::reconstruct(p.kernel, p.prog, p.sol);
  CHECK((traj.states.front() - *p.spec.x0).norm() <= 1e-6);
  // A solution of the tightened program satisfies the original constraints.
  const auto rep = lqk::audit(traj, p.spec.constraints);
  CHECK(rep.max_violation <= 0.0);
  CHECK(rep.constraints.size() == 3);
  const auto cost = lqk::cost_report(traj, p.sol);
  CHECK(cost.z_sq == doctest::Approx(p.sol.z * p.sol.z).epsilon(1e-14));
  CHECK(cost.z_sq == doctest::Approx(p.sol.alpha.dot(p.prog.gram * p.sol.alpha)).epsilon(1e-12));
  CHECK(cost.relative_mismatch <= lqk::kCostMismatchTol);
  CHECK_FALSE(cost.mismatch);
  CHECK(cost.state_cost == 0.0);
}

TEST_CASE("general Q reconstruction") {
  const auto k = make_kernel(scalar_system(1.0), 401);
  ProblemSpec spec;
  spec.loss_points = {{0.3, Vec::Ones(1), LossKind::kLinearCost, 1.0},
                      {0.8, Vec::Ones(1), LossKind::kLinearCost, 1.0}};
  const auto prog = lqk::assemble(spec, *k, {});
  const Vec alpha = vec({1.5, -0.5});
  CHECK_THROWS_AS(lqk::reconstruct(k, prog, alpha), lqk::UnsupportedModeError);
  const auto traj = lqk::reconstruct(k, prog, alpha, 10, false);
  CHECK(traj.controls.empty());
  for (std::size_t i = 0; i < traj.times.size(); i += 11) {
    const double t = traj.times[i];
    const double ref = 1.5 * oracle::scalar_k_unit_q(t, 0.3, 1.0) - 0.5 * oracle::scalar_k_unit_q(t, 0.8, 1.0);
    CHECK(traj.states[i](0) == doctest::Approx(ref).epsilon(1e-6));
  }
}

TEST_CASE("trajectory CSV") {
  const auto k = make_kernel(scalar_system(), 21);
  ProblemSpec spec;
  spec.loss_points = {{0.5, Vec::Ones(1), LossKind::kLinearCost, 1.0}};
  const auto prog = lqk::assemble(spec, *k, {});
  const auto traj = lqk::reconstruct(k, prog, Vec::Ones(1), 2);
  const lqk::ConstraintSpec cs(constant(mat({{1.0}, {-1.0}})), constant(mat({{2.0}, {0.0}})));
  std::ostringstream out;
  lqk::write_trajectory_csv(out, traj, cs);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,x_1,u_1,margin_1,margin_2");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
  }
  CHECK(rows == traj.times.size());
  CHECK(out.str().find('\r') == std::string::npos);
}

}  // TEST_SUITE
