#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace fixtures;
using lqk::LinearSystem;
using lqk::SampledControl;
using lqk::StateTransition;

namespace {

double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

LinearSystem scalar_growth() {
  return LinearSystem(constant(Mat::Ones(1, 1)), constant(Mat::Ones(1, 1)),
                      constant(Mat::Zero(1, 1)), constant(Mat::Ones(1, 1)), 1.0);
}

}  // namespace

TEST_SUITE("linsys") {

TEST_CASE("matrix functions") {
  SUBCASE("sampled interpolates and clamps") {
    auto f = MatrixFunction::sampled({0.0, 1.0}, {mat({{0.0}}), mat({{2.0}})});
    CHECK(f(0.25)(0, 0) == doctest::Approx(0.5));
    CHECK(f(-1.0)(0, 0) == doctest::Approx(0.0));
    CHECK(f(3.0)(0, 0) == doctest::Approx(2.0));
  }
  SUBCASE("bad samples are rejected") {
    CHECK_THROWS_AS(MatrixFunction::sampled({0.0, 0.0}, {mat({{0.0}}), mat({{1.0}})}),
                    lqk::UsageError);
    CHECK_THROWS_AS(MatrixFunction::sampled({0.0}, {mat({{0.0}}), mat({{1.0}})}), lqk::UsageError);
    CHECK_THROWS_AS(MatrixFunction::constant(mat({{std::nan("")}})), lqk::UsageError);
  }
  SUBCASE("callable shape is enforced") {
    auto f = MatrixFunction::callable(2, 2, [](double) { return Mat::Zero(1, 1).eval(); });
    CHECK_THROWS_AS(f(0.0), lqk::UsageError);
  }
  SUBCASE("zero detection") {
    CHECK(constant(Mat::Zero(2, 2)).is_zero());
    CHECK_FALSE(constant(Mat::Identity(2, 2)).is_zero());
  }
}

TEST_CASE("system shape checks") {
  CHECK_THROWS_AS(LinearSystem(constant(Mat::Zero(2, 2)), constant(Mat::Ones(3, 1)),
                               constant(Mat::Zero(2, 2)), constant(Mat::Ones(1, 1)), 1.0),
                  lqk::UsageError);
  CHECK_THROWS_AS(LinearSystem(constant(Mat::Zero(1, 1)), constant(Mat::Ones(1, 1)),
                               constant(Mat::Zero(1, 1)), constant(Mat::Ones(1, 1)), 0.0),
                  lqk::UsageError);
  CHECK_THROWS_AS(lqk::UniformGrid(1.0, 4), lqk::UsageError);
}

TEST_CASE("validate") {
  SUBCASE("identity R passes") {
    auto rep = lqk::validate(double_integrator());
    CHECK(rep.ok);
    CHECK(rep.min_r_eigenvalue == doctest::Approx(1.0));
  }
  SUBCASE("zero R fails") {
    auto rep = lqk::validate(double_integrator().with_R(constant(Mat::Zero(1, 1))));
    CHECK_FALSE(rep.ok);
    REQUIRE_FALSE(rep.failures.empty());
    CHECK(rep.failures.front().find("r-positivity") != std::string::npos);
  }
  SUBCASE("pendulum weights pass") {
    auto rep = lqk::validate(pendulum_system());
    CHECK(rep.ok);
    CHECK(rep.min_r_eigenvalue == doctest::Approx(1e4));
  }
  SUBCASE("indefinite Q fails") {
    auto rep = lqk::validate(scalar_system(-1.0));
    CHECK_FALSE(rep.ok);
  }
  SUBCASE("declared floor above R fails") {
    LinearSystem sys(constant(Mat::Zero(1, 1)), constant(Mat::Ones(1, 1)), constant(Mat::Zero(1, 1)),
                     constant(Mat::Ones(1, 1)), 1.0, 2.0);
    CHECK_FALSE(lqk::validate(sys).ok);
  }
}

TEST_CASE("transition matrix examples") {
  SUBCASE("zero dynamics give the identity") {
    StateTransition st(LinearSystem(constant(Mat::Zero(2, 2)), constant(Mat::Ones(2, 1)),
                                    constant(Mat::Zero(2, 2)), constant(Mat::Ones(1, 1)), 1.0),
                       101);
    for (double t : {0.0, 0.3, 0.71, 1.0}) {
      for (double s : {0.0, 0.5, 0.93}) CHECK(max_abs(st(t, s) - Mat::Identity(2, 2)) < 1e-14);
    }
  }
  SUBCASE("nilpotent generator") {
    StateTransition st(double_integrator(), 101);
    for (double t : {0.0, 0.123, 0.5, 1.0}) {
      CHECK(max_abs(st(t, 0.0) - oracle::double_integrator_phi(t)) < 1e-12);
    }
  }
  SUBCASE("scalar growth against an adaptive ODE oracle") {
    StateTransition st(scalar_growth(), 101);
    const auto y = oracle::dopri([](double, const oracle::Vec& v) { return v; }, 0.0, 1.0,
                                 oracle::Vec::Ones(1));
    CHECK(st(1.0, 0.0)(0, 0) == doctest::Approx(y(0)).epsilon(1e-10));
    CHECK(y(0) == doctest::Approx(std::exp(1.0)).epsilon(1e-10));
  }
  SUBCASE("time-varying A against the ODE oracle") {
    const auto sys = time_varying_system();
    StateTransition st(sys, 2001);
    CHECK_FALSE(st.exact());
    for (double t : {0.25, 0.6180339, 1.0}) {
      oracle::Mat phi(2, 2);
      for (int j = 0; j < 2; ++j) {
        phi.col(j) = oracle::dopri(
            [&](double tau, const oracle::Vec& v) { return (sys.A()(tau) * v).eval(); }, 0.0, t,
            oracle::Vec::Unit(2, j));
      }
      CHECK(max_abs(st.from_origin(t) - phi) < 1e-9);
    }
  }
}

TEST_CASE("transition matrix properties") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SUBCASE("cocycle for smooth time-varying A") {
    StateTransition st(time_varying_system(), 2001);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const double t = unif(rng), s = unif(rng), r = unif(rng);
      worst = std::max(worst, max_abs(st(t, s) * st(s, r) - st(t, r)));
    }
    CHECK(worst < 1e-8);
  }
  SUBCASE("constant A matches the Taylor exponential") {
    for (int k = 0; k < 5; ++k) {
      const Mat a = random_mat(rng, 3, 3, 2.0);
      LinearSystem sys(constant(a), constant(Mat::Ones(3, 1)), constant(Mat::Zero(3, 3)),
                       constant(Mat::Ones(1, 1)), 1.0);
      StateTransition st(sys, 101);
      for (double t : {0.1, 0.55, 1.0}) {
        const Mat ref = oracle::taylor_expm(a * t);
        CHECK(max_abs(st(t, 0.0) - ref) < 1e-10 * std::max(1.0, max_abs(ref)));
      }
      CHECK(max_abs(lqk::expm(a) - oracle::taylor_expm(a)) < 1e-10 * max_abs(oracle::taylor_expm(a)));
    }
  }
  SUBCASE("inverse factor") {
    StateTransition st(time_varying_system(), 501);
    for (double t : {0.0, 0.33, 0.999}) {
      CHECK(max_abs(st.from_origin(t) * st.from_origin_inverse(t) - Mat::Identity(2, 2)) < 1e-10);
    }
  }
  SUBCASE("times outside the horizon are rejected") {
    StateTransition st(double_integrator(), 101);
    CHECK_THROWS_AS(st(1.5, 0.0), lqk::DomainError);
    CHECK_THROWS_AS(st.from_origin(-0.1), lqk::DomainError);
  }
}

TEST_CASE("propagate examples") {
  SUBCASE("no dynamics and no input") {
    LinearSystem sys(constant(Mat::Zero(2, 2)), constant(Mat::Ones(2, 1)), constant(Mat::Zero(2, 2)),
                     constant(Mat::Ones(1, 1)), 1.0);
    StateTransition st(sys, 101);
    const Vec x0 = vec({0.3, -2.0});
    const auto u = SampledControl::constant(Vec::Zero(1), 1.0);
    for (double t : {0.0, 0.4, 1.0}) CHECK(max_abs(lqk::propagate(st, x0, u, t) - x0) < 1e-15);
  }
  SUBCASE("double integrator with unit input") {
    StateTransition st(double_integrator(), 201);
    const auto u = SampledControl::constant(Vec::Ones(1), 1.0);
    for (double t : {0.0, 0.35, 0.8, 1.0}) {
      const Vec x = lqk::propagate(st, Vec::Zero(2), u, t);
      CHECK(x(0) == doctest::Approx(0.5 * t * t).epsilon(1e-12));
      CHECK(x(1) == doctest::Approx(t).epsilon(1e-12));
    }
  }
  SUBCASE("scalar growth with unit input") {
    StateTransition st(scalar_growth(), 201);
    const auto u = SampledControl::constant(Vec::Ones(1), 1.0);
    const auto y = oracle::dopri([](double, const oracle::Vec& v) { return (v.array() + 1.0).matrix(); },
                                 0.0, 1.0, oracle::Vec::Zero(1));
    CHECK(lqk::propagate(st, Vec::Zero(1), u, 1.0)(0) == doctest::Approx(y(0)).epsilon(1e-9));
    CHECK(y(0) == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-10));
  }
  SUBCASE("zero input reduces to the transition matrix") {
    StateTransition st(time_varying_system(), 501);
    const Vec x0 = vec({1.0, -0.5});
    const auto u = SampledControl::constant(Vec::Zero(1), 1.0);
    for (double t : {0.0, 0.2, 0.77, 1.0}) {
      CHECK(max_abs(lqk::propagate(st, x0, u, t) - st.from_origin(t) * x0) < 1e-10);
    }
  }
  SUBCASE("piecewise-linear input against the ODE oracle") {
    std::mt19937 rng(11);
    const auto sys = time_varying_system();
    StateTransition st(sys, 2001);
    const auto pl = oracle::random_piecewise_linear(rng, 1.0, 7);
    std::vector<Vec> vals;
    for (double v : pl.values) vals.push_back(Vec::Constant(1, v));
    SampledControl u(pl.knots, vals);
    const Vec x0 = vec({0.5, 0.25});
    const std::vector<double> times{0.1, 0.5, 0.9, 1.0};
    const auto xs = lqk::propagate(st, x0, u, times);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const auto ref = oracle::dopri(
          [&](double tau, const oracle::Vec& v) {
            return (sys.A()(tau) * v + sys.B()(tau) * pl(tau)).eval();
          },
          0.0, times[k], x0, 1e-12, 1e-14);
      CHECK(max_abs(xs[k] - ref) < 1e-8);
    }
  }
  SUBCASE("control jumps are honoured") {
    StateTransition st(scalar_system(), 101);
    // u = 0 on [0, 0.5), 1 on [0.5, 1].
    SampledControl u({0.0, 0.5, 0.5, 1.0},
                     {Vec::Zero(1), Vec::Zero(1), Vec::Ones(1), Vec::Ones(1)});
    CHECK(u(0.5)(0) == doctest::Approx(1.0));
    CHECK(lqk::propagate(st, Vec::Zero(1), u, 1.0)(0) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("dimension errors") {
    StateTransition st(double_integrator(), 101);
    const auto u = SampledControl::constant(Vec::Ones(1), 1.0);
    CHECK_THROWS_AS(lqk::propagate(st, Vec::Zero(3), u, 0.5), lqk::UsageError);
  }
}

TEST_CASE("uniform grid") {
  lqk::UniformGrid g(2.0, 5);
  CHECK(g[4] == doctest::Approx(2.0));
  CHECK(g.step() == doctest::Approx(0.5));
  int idx = -1;
  CHECK(g.is_node(1.5, &idx));
  CHECK(idx == 3);
  CHECK_FALSE(g.is_node(1.2));
  CHECK(g.nearest(1.2) == 2);
  const auto r = g.refined(2);
  CHECK(r.size() == 9);
  CHECK(r.back() == doctest::Approx(2.0));
}

}  // TEST_SUITE
