#pragma once

#include <Eigen/Dense>
#include <functional>

namespace memprice {

// Euclidean projection onto {w >= 0, sum w = 1} by the sorted-threshold rule.
// Ties in the sort are broken by index, so the result is deterministic.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

// KKT residual of min f(w) over the simplex at w with gradient g: the largest
// of |g_i - nu| on the support and max(0, nu - g_i) off it, where nu is the
// mean gradient over the support.
double simplex_kkt_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& g);

// Smooth convex objective on the simplex.
struct SimplexObjective {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian;
};

struct SimplexSolverOptions {
  double tolerance = 1e-9;
  int max_iterations = 5000;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 80;
};

struct SimplexResult {
  Eigen::VectorXd w;
  double value = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Gradient projection to settle the active face, followed by a Newton step
// inside that face with a ratio test against the nonnegativity bounds.
SimplexResult minimize_on_simplex(const SimplexObjective& objective, Eigen::VectorXd start,
                                  const SimplexSolverOptions& opts);

}  // namespace memprice
