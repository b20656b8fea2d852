#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "memprice/error.hpp"
#include "memprice/market_data.hpp"

namespace memprice {

// Reference measure used by maximum entropy in the mean. Bounded mode places
// unit masses at 0 and L for every increment, so 0 <= xi_j <= L; unbounded
// mode uses un-normalized Poisson masses and only xi_j >= 0.
class SolveMode {
 public:
  static SolveMode unbounded() { return SolveMode(std::nullopt); }
  static SolveMode bounded(double bound);

  bool is_bounded() const noexcept { return bound_.has_value(); }
  // Only meaningful in bounded mode.
  double bound() const noexcept { return bound_.value_or(0.0); }
  std::string name() const { return is_bounded() ? "bounded" : "unbounded"; }

  bool operator==(const SolveMode&) const = default;

 private:
  explicit SolveMode(std::optional<double> bound) : bound_(bound) {}
  std::optional<double> bound_;
};

// The discretized pricing problem: find increments xi >= 0 with A xi inside
// the product of bid-ask boxes, where A = B T and
//   B(i, j) = exp(-r) / N * q_i(j / N),   T = N x N lower-triangular ones.
class MemProblem {
 public:
  MemProblem(Eigen::MatrixXd b, std::vector<BidAskRange> boxes, double rate);

  // Builds a problem straight from A; B is recovered by differencing columns
  // and must be entrywise nonnegative. Used for small hand-made instances.
  static MemProblem from_matrix(const Eigen::MatrixXd& a, std::vector<BidAskRange> boxes,
                                double rate = 0.0);

  const Eigen::MatrixXd& b() const noexcept { return b_; }
  const Eigen::MatrixXd& t() const noexcept { return t_; }
  const Eigen::MatrixXd& a() const noexcept { return a_; }
  const std::vector<BidAskRange>& boxes() const noexcept { return boxes_; }
  double rate() const noexcept { return rate_; }
  Eigen::Index assets() const noexcept { return a_.rows(); }
  Eigen::Index grid_size() const noexcept { return a_.cols(); }

  Eigen::VectorXd bids() const;
  Eigen::VectorXd asks() const;

 private:
  Eigen::MatrixXd b_;
  Eigen::MatrixXd t_;
  Eigen::MatrixXd a_;
  std::vector<BidAskRange> boxes_;
  double rate_;
};

enum class SolverMethod {
  // Newton steps restricted to the current sign orthant of lambda, projected
  // back onto it, with Armijo backtracking. Default.
  projected_newton,
  // lambda = p - m with p, m >= 0 and plain projected gradient descent.
  projected_gradient,
};

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iterations = 10000;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
  SolverMethod method = SolverMethod::projected_newton;

  void validate() const;
};

struct MemSolution {
  SolveMode mode = SolveMode::unbounded();
  Eigen::VectorXd lambda;
  Eigen::VectorXd xi;
  Eigen::VectorXd phi;
  Eigen::VectorXd prices;
  double residual = 0.0;
  double dual_value = 0.0;
  int iterations = 0;
};

// Raised when the dual entropy could not be minimized to tolerance, either
// because the budget ran out or because the boxes miss the cone {A xi}. In
// the latter case the dual is unbounded below and no minimizer exists.
class MemNonConvergence : public Error {
 public:
  MemNonConvergence(const std::string& what, MemSolution best)
      : Error(what), best_(std::move(best)) {}
  const MemSolution& best() const noexcept { return best_; }

 private:
  MemSolution best_;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Smooth gradient of ln Z plus the per-coordinate contribution of the box
// support function: {a_i} if lambda_i > 0, {b_i} if lambda_i < 0 and
// [b_i, a_i] if lambda_i == 0.
struct DualGradient {
  Eigen::VectorXd smooth;
  std::vector<Interval> box_term;
};

struct DistortionCurve {
  Eigen::VectorXd u;       // u_j = j / N, j = 1..N
  Eigen::VectorXd gprime;  // g'(1 - u_j) = phi_j
  Eigen::VectorXd v;       // v_k = k / N, k = 0..N
  Eigen::VectorXd g;       // g(v_k)
  // g(1). Not normalized to one; the discretized problem carries no such
  // constraint.
  double total_mass = 0.0;
};

MemProblem build_discretization(const QuantileGrid& grid, const std::vector<BidAskRange>& ranges,
                                double rate);

// ln Z(lambda) alone.
double log_partition(const Eigen::VectorXd& lambda, const MemProblem& problem, SolveMode mode);

// Sigma(lambda) = ln Z(lambda) + sum_i ((a_i - b_i)/2 |lambda_i| + (a_i + b_i)/2 lambda_i).
double dual_entropy(const Eigen::VectorXd& lambda, const MemProblem& problem, SolveMode mode);

DualGradient dual_gradient(const Eigen::VectorXd& lambda, const MemProblem& problem, SolveMode mode);

// Primal increments recovered from multipliers.
Eigen::VectorXd increments_from_multipliers(const Eigen::VectorXd& lambda, const MemProblem& problem,
                                            SolveMode mode);

MemSolution solve_mem(const MemProblem& problem, const SolverOptions& opts, SolveMode mode);

// A xi for a solution of this problem. Throws IntegrityError when a price
// leaves its box by more than tol.
Eigen::VectorXd conservative_prices(const MemProblem& problem, const MemSolution& solution,
                                    double tol = 1e-6);

DistortionCurve reconstruct_distortion(const MemSolution& solution, const MemProblem& problem,
                                       double tol = 1e-12);

// Largest violation of the subgradient optimality condition 0 in dSigma.
double verify_optimality(const MemProblem& problem, const MemSolution& solution);
double optimality_residual(const Eigen::VectorXd& lambda, const MemProblem& problem, SolveMode mode);

}  // namespace memprice
