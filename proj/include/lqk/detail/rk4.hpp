#pragma once

#include <Eigen/Dense>

namespace lqk::detail {

// One classical RK4 step of the linear matrix ODE Y' = F(t) Y, where
// `coeff(t)` returns F(t). The step may be negative.
template <typename Coeff>
Eigen::MatrixXd rk4_linear_step(const Coeff& coeff, double t, const Eigen::MatrixXd& y,
                                double h) {
  const Eigen::MatrixXd f0 = coeff(t);
  const Eigen::MatrixXd fm = coeff(t + 0.5 * h);
  const Eigen::MatrixXd f1 = coeff(t + h);
  const Eigen::MatrixXd k1 = f0 * y;
  const Eigen::MatrixXd k2 = fm * (y + 0.5 * h * k1);
  const Eigen::MatrixXd k3 = fm * (y + 0.5 * h * k2);
  const Eigen::MatrixXd k4 = f1 * (y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace lqk::detail
