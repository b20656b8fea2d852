#pragma once

#include <Eigen/Dense>

#include "memprice/error.hpp"
#include "memprice/market_data.hpp"
#include "memprice/simplex.hpp"

namespace memprice {

// Long-only share quantities bought with capital C0 at some price vector.
struct Holdings {
  Eigen::VectorXd shares;
  double capital = 0.0;
};

// Capital fractions on the unit simplex.
struct Weights {
  Eigen::VectorXd w;
};

struct MomentEstimates {
  Eigen::VectorXd mu;     // mean gross returns
  Eigen::MatrixXd sigma;  // covariance of gross returns

  // Sample mean and unbiased (n - 1) covariance of the rows of `returns`.
  static MomentEstimates from_returns(const Eigen::MatrixXd& returns);
  void validate() const;
};

using PortfolioOptions = SimplexSolverOptions;

class PortfolioNonConvergence : public Error {
 public:
  PortfolioNonConvergence(const std::string& what, Eigen::VectorXd best_weights)
      : Error(what), best_(std::move(best_weights)) {}
  const Eigen::VectorXd& best_weights() const noexcept { return best_; }

 private:
  Eigen::VectorXd best_;
};

// ln V(h) = ln E[exp(-<h, S(1)>)] under the uniform law on scenario rows.
double exp_utility_objective(const Eigen::VectorXd& h, const ScenarioMatrix& scenarios);

// Minimizes ln V(h) over {h >= 0, <h, prices> = capital}.
Holdings optimize_exponential_utility(const ScenarioMatrix& scenarios, const Eigen::VectorXd& prices,
                                      double capital, const PortfolioOptions& opts = {});

// mu^t w - gamma/2 w^t Sigma w.
double mean_variance_objective(const Eigen::VectorXd& w, const MomentEstimates& moments, double gamma);

// Maximizes the mean-variance objective over the simplex. gamma = 0 puts all
// weight on the first asset with the largest mean.
Weights optimize_mean_variance(const MomentEstimates& moments, double gamma,
                               const PortfolioOptions& opts = {});

// h_i = capital * w_i / prices_i.
Holdings holdings_from_weights(const Weights& weights, const Eigen::VectorXd& prices, double capital);

double portfolio_gross_return(const Holdings& holdings, const Eigen::VectorXd& s1);

}  // namespace memprice
