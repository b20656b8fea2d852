#include "memprice/portfolio.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace memprice {
namespace {

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// log(mean(exp(z))) with max-subtraction.
double log_mean_exp(const Eigen::VectorXd& z) {
  const double top = z.maxCoeff();
  return top + std::log((z.array() - top).exp().mean());
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp().matrix();
  return p / p.sum();
}

}  // namespace

MomentEstimates MomentEstimates::from_returns(const Eigen::MatrixXd& returns) {
  if (returns.rows() < 2) throw DomainError("moment estimates need at least two observations");
  MomentEstimates m;
  m.mu = returns.colwise().mean().transpose();
  const Eigen::MatrixXd centered = returns.rowwise() - m.mu.transpose();
  m.sigma = centered.transpose() * centered / static_cast<double>(returns.rows() - 1);
  m.sigma = 0.5 * (m.sigma + m.sigma.transpose());
  return m;
}

void MomentEstimates::validate() const {
  if (mu.size() == 0) throw DomainError("no assets in moment estimates");
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) {
    throw DimensionError("covariance shape does not match the mean vector");
  }
  if (!mu.allFinite() || !sigma.allFinite()) throw DomainError("moment estimates must be finite");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DomainError("covariance matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10) {
    throw DomainError("covariance matrix is not positive semidefinite");
  }
}

double exp_utility_objective(const Eigen::VectorXd& h, const ScenarioMatrix& scenarios) {
  if (h.size() != scenarios.assets()) throw DimensionError("holdings do not match scenario columns");
  return log_mean_exp(-(scenarios.values() * h));
}

Holdings optimize_exponential_utility(const ScenarioMatrix& scenarios, const Eigen::VectorXd& prices,
                                      double capital, const PortfolioOptions& opts) {
  const Eigen::Index m = scenarios.assets();
  if (scenarios.scenarios() == 0) throw DomainError("exponential utility needs scenarios");
  if (prices.size() != m) throw DimensionError("price vector does not match scenario columns");
  if (!(prices.array() > 0.0).all() || !prices.allFinite()) {
    throw DomainError("exponential utility needs positive prices");
  }
  if (!(capital > 0.0) || !std::isfinite(capital)) throw DomainError("capital must be positive");

  // h = capital * w / prices turns the budget into the unit simplex. X holds
  // scenario gross returns relative to the pricing vector, and the objective
  // is ln V / capital so that gradients are O(1).
  const Eigen::MatrixXd x = scenarios.values() * prices.cwiseInverse().asDiagonal();
  SimplexObjective obj;
  obj.value = [&](const Eigen::VectorXd& w) { return log_mean_exp(-capital * (x * w)) / capital; };
  obj.gradient = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
    return -(x.transpose() * softmax(-capital * (x * w)));
  };
  obj.hessian = [&](const Eigen::VectorXd& w) -> Eigen::MatrixXd {
    const Eigen::VectorXd p = softmax(-capital * (x * w));
    const Eigen::VectorXd mean = x.transpose() * p;
    return capital * (x.transpose() * p.asDiagonal() * x - mean * mean.transpose());
  };
  const SimplexResult r =
      minimize_on_simplex(obj, Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)), opts);
  if (!r.converged) {
    throw PortfolioNonConvergence("exponential utility optimizer did not converge (KKT residual " +
                                      short_number(r.residual) + ")",
                                  r.w);
  }
  return holdings_from_weights(Weights{r.w}, prices, capital);
}

double mean_variance_objective(const Eigen::VectorXd& w, const MomentEstimates& moments, double gamma) {
  return moments.mu.dot(w) - 0.5 * gamma * w.dot(moments.sigma * w);
}

Weights optimize_mean_variance(const MomentEstimates& moments, double gamma,
                               const PortfolioOptions& opts) {
  moments.validate();
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("risk aversion must be >= 0");
  const Eigen::Index m = moments.mu.size();
  if (gamma == 0.0) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < m; ++i) {
      if (moments.mu[i] > moments.mu[best]) best = i;
    }
    return Weights{Eigen::VectorXd::Unit(m, best)};
  }
  SimplexObjective obj;
  obj.value = [&](const Eigen::VectorXd& w) { return -mean_variance_objective(w, moments, gamma); };
  obj.gradient = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
    return -moments.mu + gamma * (moments.sigma * w);
  };
  obj.hessian = [&](const Eigen::VectorXd&) -> Eigen::MatrixXd { return gamma * moments.sigma; };
  const SimplexResult r =
      minimize_on_simplex(obj, Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)), opts);
  if (!r.converged) {
    throw PortfolioNonConvergence("mean-variance optimizer did not converge (KKT residual " +
                                      short_number(r.residual) + ")",
                                  r.w);
  }
  return Weights{r.w};
}

Holdings holdings_from_weights(const Weights& weights, const Eigen::VectorXd& prices, double capital) {
  if (weights.w.size() != prices.size()) throw DimensionError("weights do not match prices");
  if (!(prices.array() > 0.0).all()) throw DomainError("prices must be positive");
  return Holdings{capital * weights.w.cwiseQuotient(prices), capital};
}

double portfolio_gross_return(const Holdings& holdings, const Eigen::VectorXd& s1) {
  if (holdings.shares.size() != s1.size()) throw DimensionError("holdings do not match price vector");
  return holdings.shares.dot(s1) / holdings.capital;
}

}  // namespace memprice
