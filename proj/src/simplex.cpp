#include "memprice/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "memprice/error.hpp"

namespace memprice {
namespace {

bool roughly_no_worse(double f_new, double f_old) {
  return f_new - f_old <= 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(f_old) + 1.0);
}

}  // namespace

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n == 0) throw DimensionError("cannot project an empty vector onto the simplex");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return v[a] > v[b] || (v[a] == v[b] && a < b);
  });
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cumulative += v[order[static_cast<std::size_t>(k)]];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (v[order[static_cast<std::size_t>(k)]] - candidate > 0) theta = candidate;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

double simplex_kkt_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& g) {
  double nu = 0.0;
  int support = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] > 0) {
      nu += g[i];
      ++support;
    }
  }
  if (support == 0) return std::numeric_limits<double>::infinity();
  nu /= support;
  double res = std::abs(w.sum() - 1.0);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    res = std::max(res, w[i] > 0 ? std::abs(g[i] - nu) : std::max(0.0, nu - g[i]));
    if (w[i] < 0) res = std::max(res, -w[i]);
  }
  return res;
}

SimplexResult minimize_on_simplex(const SimplexObjective& objective, Eigen::VectorXd start,
                                  const SimplexSolverOptions& opts) {
  const Eigen::Index n = start.size();
  SimplexResult out;
  out.w = project_to_simplex(start);
  out.value = objective.value(out.w);
  Eigen::VectorXd g = objective.gradient(out.w);
  out.residual = simplex_kkt_residual(out.w, g);
  double step = 1.0;

  auto accept = [&](Eigen::VectorXd w_new, double f_new) {
    out.w = std::move(w_new);
    out.value = f_new;
    g = objective.gradient(out.w);
    out.residual = simplex_kkt_residual(out.w, g);
  };

  int it = 0;
  for (; it < opts.max_iterations && !(out.residual < opts.tolerance); ++it) {
    bool progressed = false;

    // Gradient projection with backtracking along the projection arc.
    {
      double t = step * 4.0;
      for (int bt = 0; bt < opts.max_backtracks; ++bt, t *= opts.backtrack) {
        Eigen::VectorXd trial = project_to_simplex(out.w - t * g);
        const double f_trial = objective.value(trial);
        if (!std::isfinite(f_trial)) continue;
        const double predicted = g.dot(trial - out.w);
        bool ok = f_trial < out.value && f_trial <= out.value + opts.armijo * predicted;
        if (!ok && roughly_no_worse(f_trial, out.value)) {
          ok = simplex_kkt_residual(trial, objective.gradient(trial)) < out.residual;
        }
        if (ok) {
          step = t;
          const double old_res = out.residual;
          const double old_value = out.value;
          accept(std::move(trial), f_trial);
          progressed = out.value < old_value || out.residual < old_res;
          break;
        }
      }
    }
    if (out.residual < opts.tolerance) break;

    // Newton step within the face spanned by the current support.
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (out.w[i] > 0) support.push_back(i);
    }
    const auto s = static_cast<Eigen::Index>(support.size());
    if (s >= 2) {
      const Eigen::MatrixXd h = objective.hessian(out.w);
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
      for (Eigen::Index a = 0; a < s; ++a) {
        for (Eigen::Index b = 0; b < s; ++b) {
          kkt(a, b) = h(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(b)]);
        }
        kkt(a, s) = 1.0;
        kkt(s, a) = 1.0;
        rhs[a] = -g[support[static_cast<std::size_t>(a)]];
      }
      const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
      Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
      for (Eigen::Index a = 0; a < s; ++a) d[support[static_cast<std::size_t>(a)]] = sol[a];
      if (d.allFinite() && g.dot(d) < 0) {
        double alpha_max = 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (d[i] < 0 && -out.w[i] / d[i] < alpha_max) {
            alpha_max = -out.w[i] / d[i];
            blocking = i;
          }
        }
        double alpha = alpha_max;
        for (int bt = 0; bt < opts.max_backtracks; ++bt, alpha *= opts.backtrack) {
          Eigen::VectorXd trial = (out.w + alpha * d).cwiseMax(0.0);
          if (alpha == alpha_max && blocking >= 0) trial[blocking] = 0.0;
          trial /= trial.sum();
          const double f_trial = objective.value(trial);
          if (!std::isfinite(f_trial)) continue;
          const bool armijo = f_trial < out.value && f_trial <= out.value + opts.armijo * alpha * g.dot(d);
          bool noise = false;
          if (!armijo && roughly_no_worse(f_trial, out.value)) {
            noise = simplex_kkt_residual(trial, objective.gradient(trial)) < out.residual;
          }
          if (armijo || noise) {
            accept(std::move(trial), f_trial);
            progressed = true;
            break;
          }
        }
      }
    }
    if (!progressed) break;
  }
  out.iterations = it;
  out.converged = out.residual < opts.tolerance;
  return out;
}

}  // namespace memprice
