#pragma once

#include <Eigen/Dense>

#include <functional>

namespace ridgeem {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct BoundedProblem {
  Objective objective;
  Gradient gradient;  // empty -> central finite differences
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd x0;

  Eigen::Index dim() const { return x0.size(); }
};

struct OptOptions {
  double tol = 1e-8;  // projected-gradient infinity norm
  int max_iter = 100;
  int history_size = 6;
  double rel_step = 1e-6;  // finite-difference step, relative to max(|x_i|, 1)
  // Called with every accepted iterate (x, f), including x0.
  std::function<void(const Eigen::VectorXd&, double)> on_iterate;
};

struct OptResult {
  Eigen::VectorXd x_opt;
  double f_opt = 0.0;
  int iterations = 0;
  bool converged = false;
  double grad_norm = 0.0;
  int evaluations = 0;
};

// Limited-memory BFGS with gradient projection onto the box [lower, upper].
// Iterates never leave the box and the accepted objective values never
// increase. Throws std::invalid_argument if x0 is infeasible or f(x0) is not
// finite.
OptResult minimize_bounded(const BoundedProblem& problem, const OptOptions& opts = {});

// Central differences with h_i = rel_step * max(|x_i|, 1). Near a bound the
// probe is clipped to stay inside [lower, upper], falling back to a one-sided
// difference. Throws NumericalError naming the coordinate if a probe is not
// finite.
Eigen::VectorXd finite_diff_gradient(const Objective& objective, const Eigen::VectorXd& x,
                                     double rel_step, const Eigen::VectorXd& lower,
                                     const Eigen::VectorXd& upper);
Eigen::VectorXd finite_diff_gradient(const Objective& objective, const Eigen::VectorXd& x,
                                     double rel_step = 1e-6);

}  // namespace ridgeem
