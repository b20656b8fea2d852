#include "memprice/mem_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace memprice {
namespace {

void check_lambda(const Eigen::VectorXd& lambda, const MemProblem& problem) {
  if (lambda.size() != problem.assets()) {
    throw DimensionError("multiplier vector has length " + std::to_string(lambda.size()) +
                         ", problem has " + std::to_string(problem.assets()) + " assets");
  }
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// 1 / (1 + exp(z)) without overflow.
double logistic_tail(double z) {
  if (z >= 0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

double box_support(const Eigen::VectorXd& lambda, const MemProblem& problem) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const auto& k = problem.boxes()[static_cast<std::size_t>(i)];
    total += lambda[i] > 0 ? k.ask() * lambda[i] : k.bid() * lambda[i];
  }
  return total;
}

// Smooth part evaluated once per iterate: value, gradient, increments and the
// diagonal weights w with Hessian = A diag(w) A^t.
struct SmoothEval {
  double log_z = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd xi;
  Eigen::VectorXd weights;
};

SmoothEval evaluate_smooth(const Eigen::VectorXd& lambda, const MemProblem& problem, SolveMode mode) {
  const Eigen::VectorXd s = problem.a().transpose() * lambda;
  SmoothEval ev;
  ev.xi.resize(s.size());
  ev.weights.resize(s.size());
  if (mode.is_bounded()) {
    const double bound = mode.bound();
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      const double x = bound * s[j];
      const double p = logistic_tail(x);    // e^{-x} / (1 + e^{-x})
      const double q = logistic_tail(-x);   // 1 / (1 + e^{-x})
      ev.log_z += softplus(-x);
      ev.xi[j] = bound * p;
      ev.weights[j] = bound * bound * p * q;
    }
  } else {
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      const double e = std::exp(-s[j]);
      ev.log_z += e;
      ev.xi[j] = e;
      ev.weights[j] = e;
    }
  }
  ev.grad = -(problem.a() * ev.xi);
  return ev;
}

// Minimum-norm element of the subdifferential of Sigma at lambda, given the
// smooth gradient. Its sup-norm is the optimality residual.
Eigen::VectorXd pseudo_gradient(const Eigen::VectorXd& lambda, const Eigen::VectorXd& grad,
                                const MemProblem& problem) {
  Eigen::VectorXd pg(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const auto& k = problem.boxes()[static_cast<std::size_t>(i)];
    if (lambda[i] > 0) {
      pg[i] = grad[i] + k.ask();
    } else if (lambda[i] < 0) {
      pg[i] = grad[i] + k.bid();
    } else if (grad[i] + k.bid() > 0) {
      pg[i] = grad[i] + k.bid();
    } else if (grad[i] + k.ask() < 0) {
      pg[i] = grad[i] + k.ask();
    } else {
      pg[i] = 0.0;
    }
  }
  return pg;
}

double sign_of(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// Moves lambda along d by step t and clamps any coordinate that would leave
// its orthant (orientation sigma) to zero.
Eigen::VectorXd orthant_step(const Eigen::VectorXd& lambda, const Eigen::VectorXd& d,
                             const Eigen::VectorXd& orient, double t) {
  Eigen::VectorXd out = lambda + t * d;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out[i] * orient[i] <= 0) out[i] = 0.0;
  }
  return out;
}

MemSolution make_solution(const MemProblem& problem, SolveMode mode, Eigen::VectorXd lambda,
                          const SmoothEval& ev, double residual, int iterations) {
  MemSolution sol;
  sol.mode = mode;
  sol.lambda = std::move(lambda);
  sol.xi = ev.xi;
  // phi = T xi as a running sum, which keeps phi exactly nondecreasing.
  sol.phi.resize(sol.xi.size());
  double running = 0.0;
  for (Eigen::Index j = 0; j < sol.xi.size(); ++j) sol.phi[j] = (running += sol.xi[j]);
  sol.prices = problem.a() * sol.xi;
  sol.residual = residual;
  sol.dual_value = ev.log_z + box_support(sol.lambda, problem);
  sol.iterations = iterations;
  return sol;
}

// Sigma is a sum of terms much larger than itself once |lambda| grows, so its
// rounding noise scales with ln Z + sum |lambda_i| ask_i rather than |Sigma|.
double dual_magnitude(const Eigen::VectorXd& lambda, double log_z, const MemProblem& problem) {
  return std::abs(log_z) + lambda.cwiseAbs().dot(problem.asks());
}

bool roughly_no_worse(double f_new, double f_old, double magnitude) {
  return f_new - f_old <= 64.0 * std::numeric_limits<double>::epsilon() * (magnitude + 1.0);
}

MemSolution solve_projected_newton(const MemProblem& problem, const SolverOptions& opts,
                                   SolveMode mode) {
  const Eigen::Index m = problem.assets();
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  SmoothEval ev = evaluate_smooth(lambda, problem, mode);
  double value = ev.log_z + box_support(lambda, problem);
  Eigen::VectorXd pg = pseudo_gradient(lambda, ev.grad, problem);
  double residual = pg.lpNorm<Eigen::Infinity>();

  int it = 0;
  for (; it < opts.max_iterations && residual >= opts.tolerance; ++it) {
    Eigen::VectorXd orient(m);
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < m; ++i) {
      orient[i] = lambda[i] != 0 ? sign_of(lambda[i]) : -sign_of(pg[i]);
      if (orient[i] != 0) free.push_back(i);
    }

    // Newton direction on the free coordinates.
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd af(nf, problem.grid_size());
    Eigen::VectorXd gf(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
      af.row(k) = problem.a().row(free[static_cast<std::size_t>(k)]);
      gf[k] = pg[free[static_cast<std::size_t>(k)]];
    }
    Eigen::MatrixXd h = af * ev.weights.asDiagonal() * af.transpose();
    const double scale = std::max(h.diagonal().maxCoeff(), std::numeric_limits<double>::min());
    h.diagonal().array() += 1e-13 * scale;
    Eigen::VectorXd newton_f = h.ldlt().solve(-gf);

    Eigen::VectorXd newton = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd scaled_grad = Eigen::VectorXd::Zero(m);
    for (Eigen::Index k = 0; k < nf; ++k) {
      const Eigen::Index i = free[static_cast<std::size_t>(k)];
      newton[i] = std::isfinite(newton_f[k]) ? newton_f[k] : 0.0;
      scaled_grad[i] = -pg[i] / std::max(h(k, k), std::numeric_limits<double>::min());
    }

    // Backtracking along dir; clamped steps stay in the current orthant.
    struct Trial {
      Eigen::VectorXd lambda;
      SmoothEval ev;
      double value;
      Eigen::VectorXd pg;
      double residual;
    };
    auto search = [&](const Eigen::VectorXd& dir, bool clamp) -> std::optional<Trial> {
      if (dir.isZero(0.0)) return std::nullopt;
      double t = 1.0;
      for (int bt = 0; bt < opts.max_backtracks; ++bt, t *= opts.backtrack) {
        Eigen::VectorXd trial = clamp ? orthant_step(lambda, dir, orient, t) : Eigen::VectorXd(lambda + t * dir);
        SmoothEval trial_ev = evaluate_smooth(trial, problem, mode);
        const double trial_value = trial_ev.log_z + box_support(trial, problem);
        if (!std::isfinite(trial_value)) continue;
        const double decrease = pg.dot(trial - lambda);
        Eigen::VectorXd trial_pg = pseudo_gradient(trial, trial_ev.grad, problem);
        const double trial_res = trial_pg.lpNorm<Eigen::Infinity>();
        const bool armijo = trial_value < value && trial_value <= value + opts.armijo * decrease;
        const bool noise_level =
            roughly_no_worse(trial_value, value, dual_magnitude(trial, trial_ev.log_z, problem)) &&
            trial_res < residual;
        if (armijo || noise_level) return Trial{std::move(trial), std::move(trial_ev), trial_value, std::move(trial_pg), trial_res};
      }
      return std::nullopt;
    };

    std::optional<Trial> best = search(newton, true);
    // Coupled coordinates that must change sign make the clamped step crawl;
    // the dual is convex everywhere, so the plain step is also admissible.
    if (!best || best->lambda != lambda + newton) {
      std::optional<Trial> plain = search(newton, false);
      if (plain && (!best || plain->value < best->value)) best = std::move(plain);
    }
    if (!best) best = search(scaled_grad, true);
    const bool accepted = best.has_value();
    if (accepted) {
      lambda = std::move(best->lambda);
      ev = std::move(best->ev);
      value = best->value;
      pg = std::move(best->pg);
      residual = best->residual;
    }
    if (!accepted) break;  // stalled: no descent available at working precision
  }

  MemSolution sol = make_solution(problem, mode, lambda, ev, residual, it);
  if (!(residual < opts.tolerance)) {
    throw MemNonConvergence("MEM dual did not converge after " + std::to_string(it) +
                                " iterations (residual " + std::to_string(residual) +
                                "); the bid-ask boxes may not meet the attainable price cone",
                            std::move(sol));
  }
  return sol;
}

MemSolution solve_projected_gradient(const MemProblem& problem, const SolverOptions& opts,
                                     SolveMode mode) {
  const Eigen::Index m = problem.assets();
  const Eigen::VectorXd ask = problem.asks();
  const Eigen::VectorXd bid = problem.bids();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd n = Eigen::VectorXd::Zero(m);

  auto split_value = [&](const Eigen::VectorXd& pp, const Eigen::VectorXd& nn, SmoothEval& ev) {
    ev = evaluate_smooth(pp - nn, problem, mode);
    return ev.log_z + ask.dot(pp) - bid.dot(nn);
  };

  SmoothEval ev;
  double value = split_value(p, n, ev);
  double residual = pseudo_gradient(p - n, ev.grad, problem).lpNorm<Eigen::Infinity>();
  double step = 1.0 / std::max(1.0, problem.a().squaredNorm());

  int it = 0;
  Eigen::VectorXd prev_x, prev_g;
  for (; it < opts.max_iterations && residual >= opts.tolerance; ++it) {
    const Eigen::VectorXd gp = ev.grad + ask;
    const Eigen::VectorXd gn = -ev.grad - bid;
    Eigen::VectorXd x(2 * m), g(2 * m);
    x << p, n;
    g << gp, gn;
    double t = step * 4.0;
    if (prev_x.size() != 0) {
      // Barzilai-Borwein trial step from the last displacement.
      const Eigen::VectorXd sx = x - prev_x;
      const double sy = sx.dot(g - prev_g);
      if (sy > 0.0) t = sx.squaredNorm() / sy;
    }
    prev_x = x;
    prev_g = g;
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, t *= opts.backtrack) {
      const Eigen::VectorXd p_new = (p - t * gp).cwiseMax(0.0);
      const Eigen::VectorXd n_new = (n - t * gn).cwiseMax(0.0);
      SmoothEval trial_ev;
      const double trial_value = split_value(p_new, n_new, trial_ev);
      if (!std::isfinite(trial_value)) continue;
      const double decrease = gp.dot(p_new - p) + gn.dot(n_new - n);
      bool ok = trial_value < value && trial_value <= value + opts.armijo * decrease;
      if (!ok && roughly_no_worse(trial_value, value, dual_magnitude(p_new - n_new, trial_ev.log_z, problem))) {
        ok = pseudo_gradient(p_new - n_new, trial_ev.grad, problem).lpNorm<Eigen::Infinity>() < residual;
      }
      if (ok) {
        p = p_new;
        n = n_new;
        ev = std::move(trial_ev);
        value = trial_value;
        step = t;
        accepted = true;
        break;
      }
    }
    residual = pseudo_gradient(p - n, ev.grad, problem).lpNorm<Eigen::Infinity>();
    if (!accepted) break;
  }

  MemSolution sol = make_solution(problem, mode, p - n, ev, residual, it);
  if (!(residual < opts.tolerance)) {
    throw MemNonConvergence("MEM dual (projected gradient) did not converge after " +
                                std::to_string(it) + " iterations (residual " +
                                std::to_string(residual) + ")",
                            std::move(sol));
  }
  return sol;
}

}  // namespace

SolveMode SolveMode::bounded(double bound) {
  if (!(bound > 0.0) || !std::isfinite(bound)) {
    throw DomainError("bounded mode needs a positive finite bound L");
  }
  return SolveMode(bound);
}

MemProblem::MemProblem(Eigen::MatrixXd b, std::vector<BidAskRange> boxes, double rate)
    : b_(std::move(b)), boxes_(std::move(boxes)), rate_(rate) {
  if (b_.rows() == 0 || b_.cols() == 0) throw DomainError("MEM problem needs M >= 1 and N >= 1");
  if (static_cast<std::size_t>(b_.rows()) != boxes_.size()) {
    throw DimensionError("quantile rows (" + std::to_string(b_.rows()) + ") and bid-ask boxes (" +
                         std::to_string(boxes_.size()) + ") disagree");
  }
  if (!(b_.array() >= 0.0).all() || !b_.allFinite()) {
    throw DomainError("B must be entrywise nonnegative and finite");
  }
  if (!std::isfinite(rate_)) throw DomainError("rate must be finite");
  const Eigen::Index n = b_.cols();
  t_ = Eigen::MatrixXd::Zero(n, n);
  t_.triangularView<Eigen::Lower>().setOnes();
  // A(i, k) = sum_{j >= k} B(i, j), accumulated from the right.
  a_.resize(b_.rows(), n);
  for (Eigen::Index i = 0; i < b_.rows(); ++i) {
    double tail = 0.0;
    for (Eigen::Index k = n - 1; k >= 0; --k) {
      tail += b_(i, k);
      a_(i, k) = tail;
    }
  }
}

MemProblem MemProblem::from_matrix(const Eigen::MatrixXd& a, std::vector<BidAskRange> boxes,
                                   double rate) {
  Eigen::MatrixXd b(a.rows(), a.cols());
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    b.col(k) = k + 1 < a.cols() ? Eigen::VectorXd(a.col(k) - a.col(k + 1)) : Eigen::VectorXd(a.col(k));
  }
  if ((b.array() < 0.0).any()) {
    throw DomainError("A must be nonincreasing along each row to come from nonnegative B");
  }
  return MemProblem(std::move(b), std::move(boxes), rate);
}

Eigen::VectorXd MemProblem::bids() const {
  Eigen::VectorXd v(assets());
  for (Eigen::Index i = 0; i < assets(); ++i) v[i] = boxes_[static_cast<std::size_t>(i)].bid();
  return v;
}

Eigen::VectorXd MemProblem::asks() const {
  Eigen::VectorXd v(assets());
  for (Eigen::Index i = 0; i < assets(); ++i) v[i] = boxes_[static_cast<std::size_t>(i)].ask();
  return v;
}

void SolverOptions::validate() const {
  if (!(tolerance > 0.0)) throw DomainError("solver tolerance must be positive");
  if (max_iterations < 1) throw DomainError("solver needs at least one iteration");
  if (!(armijo > 0.0 && armijo < 1.0)) throw DomainError("Armijo constant must lie in (0, 1)");
  if (!(backtrack > 0.0 && backtrack < 1.0)) throw DomainError("backtracking factor must lie in (0, 1)");
  if (max_backtracks < 1) throw DomainError("need at least one backtracking step");
}

MemProblem build_discretization(const QuantileGrid& grid, const std::vector<BidAskRange>& ranges,
                                double rate) {
  if (grid.assets() == 0 || grid.size() == 0) throw DomainError("MEM problem needs M >= 1 and N >= 1");
  if (static_cast<std::size_t>(grid.assets()) != ranges.size()) {
    throw DimensionError("quantile grid covers " + std::to_string(grid.assets()) +
                         " assets but " + std::to_string(ranges.size()) + " bid-ask ranges given");
  }
  if (!std::isfinite(rate)) throw DomainError("rate must be finite");
  const double scale = std::exp(-rate) / static_cast<double>(grid.size());
  return MemProblem(scale * grid.values(), ranges, rate);
}

double log_partition(const Eigen::VectorXd& lambda, const MemProblem& problem, SolveMode mode) {
  check_lambda(lambda, problem);
  const Eigen::VectorXd s = problem.a().transpose() * lambda;
  double total = 0.0;
  if (mode.is_bounded()) {
    for (Eigen::Index j = 0; j < s.size(); ++j) total += softplus(-mode.bound() * s[j]);
  } else {
    for (Eigen::Index j = 0; j < s.size(); ++j) total += std::exp(-s[j]);
  }
  return total;
}

double dual_entropy(const Eigen::VectorXd& lambda, const MemProblem& problem, SolveMode mode) {
  return log_partition(lambda, problem, mode) + box_support(lambda, problem);
}

DualGradient dual_gradient(const Eigen::VectorXd& lambda, const MemProblem& problem, SolveMode mode) {
  check_lambda(lambda, problem);
  DualGradient g;
  g.smooth = evaluate_smooth(lambda, problem, mode).grad;
  g.box_term.reserve(static_cast<std::size_t>(lambda.size()));
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const auto& k = problem.boxes()[static_cast<std::size_t>(i)];
    if (lambda[i] > 0) {
      g.box_term.push_back({k.ask(), k.ask()});
    } else if (lambda[i] < 0) {
      g.box_term.push_back({k.bid(), k.bid()});
    } else {
      g.box_term.push_back({k.bid(), k.ask()});
    }
  }
  return g;
}

Eigen::VectorXd increments_from_multipliers(const Eigen::VectorXd& lambda, const MemProblem& problem,
                                            SolveMode mode) {
  check_lambda(lambda, problem);
  return evaluate_smooth(lambda, problem, mode).xi;
}

MemSolution solve_mem(const MemProblem& problem, const SolverOptions& opts, SolveMode mode) {
  opts.validate();
  switch (opts.method) {
    case SolverMethod::projected_gradient:
      return solve_projected_gradient(problem, opts, mode);
    case SolverMethod::projected_newton:
      break;
  }
  return solve_projected_newton(problem, opts, mode);
}

Eigen::VectorXd conservative_prices(const MemProblem& problem, const MemSolution& solution, double tol) {
  if (solution.xi.size() != problem.grid_size()) {
    throw DimensionError("solution increments do not match the problem grid");
  }
  Eigen::VectorXd prices = problem.a() * solution.xi;
  for (Eigen::Index i = 0; i < prices.size(); ++i) {
    const auto& k = problem.boxes()[static_cast<std::size_t>(i)];
    if (!k.contains(prices[i], tol)) {
      throw IntegrityError("conservative price " + std::to_string(prices[i]) + " of asset " +
                           std::to_string(i) + " lies outside [" + std::to_string(k.bid()) + ", " +
                           std::to_string(k.ask()) + "]");
    }
  }
  return prices;
}

DistortionCurve reconstruct_distortion(const MemSolution& solution, const MemProblem& problem,
                                       double tol) {
  const Eigen::Index n = problem.grid_size();
  if (solution.phi.size() != n) throw DimensionError("solution phi does not match the problem grid");
  const Eigen::VectorXd& phi = solution.phi;
  for (Eigen::Index j = 1; j < n; ++j) {
    if (phi[j] < phi[j - 1] - tol) {
      throw IntegrityError("phi decreases between grid points " + std::to_string(j) + " and " +
                           std::to_string(j + 1));
    }
  }
  DistortionCurve curve;
  const double h = 1.0 / static_cast<double>(n);
  curve.u = Eigen::VectorXd::LinSpaced(n, h, 1.0);
  curve.gprime = phi;
  curve.v = Eigen::VectorXd::LinSpaced(n + 1, 0.0, 1.0);
  curve.g.resize(n + 1);
  curve.g[0] = 0.0;
  // Left Riemann sum of g'(v) = phi(1 - v): the cell [v_{k-1}, v_k] uses phi_{N-k+1}.
  for (Eigen::Index k = 1; k <= n; ++k) curve.g[k] = curve.g[k - 1] + h * phi[n - k];
  curve.total_mass = curve.g[n];
  for (Eigen::Index k = 1; k < n; ++k) {
    const double second = curve.g[k + 1] - 2.0 * curve.g[k] + curve.g[k - 1];
    if (second > tol * std::max(1.0, std::abs(curve.g[k]))) {
      throw IntegrityError("reconstructed distortion is not concave at v = " +
                           std::to_string(curve.v[k]));
    }
  }
  return curve;
}

double optimality_residual(const Eigen::VectorXd& lambda, const MemProblem& problem, SolveMode mode) {
  check_lambda(lambda, problem);
  const SmoothEval ev = evaluate_smooth(lambda, problem, mode);
  return pseudo_gradient(lambda, ev.grad, problem).lpNorm<Eigen::Infinity>();
}

double verify_optimality(const MemProblem& problem, const MemSolution& solution) {
  return optimality_residual(solution.lambda, problem, solution.mode);
}

}  // namespace memprice
