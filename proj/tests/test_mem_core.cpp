#include <doctest.h>

#include <cmath>
#include <random>

#include "memprice/mem_core.hpp"
#include "support/oracles.hpp"

using namespace memprice;

namespace {

MemProblem single(std::vector<double> a, double bid, double ask) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k) m(0, static_cast<Eigen::Index>(k)) = a[k];
  return MemProblem::from_matrix(m, {BidAskRange(bid, ask)});
}

MemSolution with_phi(Eigen::VectorXd xi) {
  MemSolution s;
  s.xi = xi;
  s.phi.resize(xi.size());
  double run = 0.0;
  for (Eigen::Index j = 0; j < xi.size(); ++j) s.phi[j] = run += xi[j];
  return s;
}

const std::vector<SolveMode> kModes{SolveMode::unbounded(), SolveMode::bounded(100.0)};

std::optional<double> bound_of(SolveMode m) {
  return m.is_bounded() ? std::optional<double>(m.bound()) : std::nullopt;
}

}  // namespace

TEST_CASE("discretization by hand") {
  const QuantileGrid g(Eigen::RowVector2d(1.0, 3.0));
  const MemProblem p = build_discretization(g, {BidAskRange(1, 2)}, 0.0);
  CHECK(p.b()(0, 0) == 0.5);
  CHECK(p.b()(0, 1) == 1.5);
  CHECK(p.a()(0, 0) == 2.0);
  CHECK(p.a()(0, 1) == 1.5);
  CHECK(p.t() == (Eigen::Matrix2d() << 1, 0, 1, 1).finished());

  const int n = 7;
  const double c = 4.25;
  const MemProblem flat =
      build_discretization(QuantileGrid(Eigen::RowVectorXd::Constant(n, c)), {BidAskRange(1, 2)}, 0.0);
  for (int k = 1; k <= n; ++k) CHECK(flat.a()(0, k - 1) == doctest::Approx(c * (n - k + 1) / n).epsilon(1e-14));

  const MemProblem one =
      build_discretization(QuantileGrid(Eigen::MatrixXd::Constant(1, 1, 9.0)), {BidAskRange(1, 2)}, 0.03);
  CHECK(one.a()(0, 0) == doctest::Approx(std::exp(-0.03) * 9.0).epsilon(1e-15));
}

TEST_CASE("A = B T and the telescoping identity") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd q = oracle::random_quantiles(rng, 3, 40);
  std::vector<BidAskRange> boxes(3, BidAskRange(1, 2));
  const MemProblem p = build_discretization(QuantileGrid(q), boxes, 0.01);
  CHECK((p.a() - p.b() * p.t()).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index i = 0; i < 3; ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < q.cols(); ++j) row.push_back(q(i, j));
    const auto a = oracle::a_row(row, 0.01);
    for (Eigen::Index k = 0; k < q.cols(); ++k) CHECK(p.a()(i, k) == doctest::Approx(a[k]).epsilon(1e-13));
  }
  CHECK((p.a().array() >= 0).all());
  CHECK((p.b().array() >= 0).all());
}

TEST_CASE("discretization rejects mismatched or empty input") {
  CHECK_THROWS_AS(build_discretization(QuantileGrid(Eigen::RowVector2d(1, 2)), {}, 0.0), DimensionError);
  CHECK_THROWS_AS(build_discretization(QuantileGrid(Eigen::MatrixXd(0, 3)), {}, 0.0), Error);
  CHECK_THROWS_AS(MemProblem::from_matrix(Eigen::RowVector2d(1.0, 2.0), {BidAskRange(1, 2)}), DomainError);
}

TEST_CASE("dual entropy at known points") {
  std::mt19937_64 rng(2);
  const MemProblem p = build_discretization(QuantileGrid(oracle::random_quantiles(rng, 2, 30)),
                                            {BidAskRange(10, 12), BidAskRange(30, 31)}, 0.0);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  CHECK(dual_entropy(zero, p, SolveMode::unbounded()) == doctest::Approx(30.0).epsilon(1e-15));
  CHECK(dual_entropy(zero, p, SolveMode::bounded(7.0)) == doctest::Approx(30.0 * std::log(2.0)).epsilon(1e-15));

  const MemProblem unit = single({1.0}, 1.0, 1.0);
  CHECK(dual_entropy(Eigen::VectorXd::Ones(1), unit, SolveMode::unbounded()) ==
        doctest::Approx(std::exp(-1.0) + 1.0).epsilon(1e-15));
  CHECK(dual_entropy(Eigen::VectorXd::Ones(1), unit, SolveMode::unbounded()) == doctest::Approx(1.3679).epsilon(1e-4));
  CHECK_THROWS_AS(dual_entropy(Eigen::VectorXd::Zero(3), unit, SolveMode::unbounded()), DimensionError);
}

TEST_CASE("dual entropy agrees with the direct single-asset formula") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd q = oracle::random_quantiles(rng, 1, 25);
    std::vector<double> qs(q.data(), q.data() + q.size());
    const auto a = oracle::a_row(qs);
    const MemProblem p = build_discretization(QuantileGrid(q), {BidAskRange(a[0] * 5, a[0] * 9)}, 0.0);
    const double lambda = u(rng);
    for (const SolveMode& m : kModes) {
      const double want = oracle::dual_1d(a, a[0] * 5, a[0] * 9, lambda, bound_of(m));
      CHECK(dual_entropy(Eigen::VectorXd::Constant(1, lambda), p, m) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("dual gradient at lambda = 0") {
  const MemProblem p = single({2.0, 1.5}, 1.5, 2.5);
  const DualGradient g = dual_gradient(Eigen::VectorXd::Zero(1), p, SolveMode::unbounded());
  CHECK(g.smooth[0] == doctest::Approx(-3.5).epsilon(1e-15));
  CHECK(g.box_term[0].lo == 1.5);
  CHECK(g.box_term[0].hi == 2.5);

  const MemProblem q = single({1.0}, 0.5, 1.5);
  CHECK(dual_gradient(Eigen::VectorXd::Zero(1), q, SolveMode::bounded(2.0)).smooth[0] ==
        doctest::Approx(-1.0).epsilon(1e-15));

  const DualGradient pos = dual_gradient(Eigen::VectorXd::Constant(1, 0.3), p, SolveMode::unbounded());
  CHECK(pos.box_term[0].lo == 2.5);
  CHECK(pos.box_term[0].hi == 2.5);
  const DualGradient neg = dual_gradient(Eigen::VectorXd::Constant(1, -0.3), p, SolveMode::unbounded());
  CHECK(neg.box_term[0].lo == 1.5);
  CHECK(neg.box_term[0].hi == 1.5);
}

TEST_CASE("dual gradient matches central differences") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const SolveMode& mode : kModes) {
    for (int rep = 0; rep < 50; ++rep) {
      const int m = 1 + rep % 4;
      const Eigen::MatrixXd q = oracle::random_quantiles(rng, m, 20 + rep);
      std::vector<BidAskRange> boxes;
      for (int i = 0; i < m; ++i) boxes.emplace_back(q(i, 0), q(i, 0) * 1.1);
      const MemProblem p = build_discretization(QuantileGrid(q), boxes, 0.0);
      Eigen::VectorXd lambda(m);
      const double scale = mode.is_bounded() ? 0.02 / (mode.bound() * p.a().maxCoeff()) : 0.5 / p.a().maxCoeff();
      for (int i = 0; i < m; ++i) {
        double v = u(rng);
        if (std::abs(v) < 0.1) v = 0.1;
        lambda[i] = scale * v;
      }
      const DualGradient g = dual_gradient(lambda, p, mode);
      const auto f = [&](const Eigen::VectorXd& x) { return dual_entropy(x, p, mode); };
      for (int i = 0; i < m; ++i) {
        const double h = 1e-5 * std::abs(lambda[i]);
        const double fd = oracle::central_difference(f, lambda, i, h);
        const double analytic = g.smooth[i] + (lambda[i] > 0 ? p.asks()[i] : p.bids()[i]);
        CHECK(std::abs(fd - analytic) <= 1e-5 * std::max(std::abs(analytic), std::abs(g.smooth[i])));
      }
    }
  }
}

TEST_CASE("solver: trivial and hand-derived instances") {
  SUBCASE("unbounded, A = (1), K = [1, 1]") {
    const MemProblem p = single({1.0}, 1.0, 1.0);
    const MemSolution s = solve_mem(p, {}, SolveMode::unbounded());
    CHECK(std::abs(s.lambda[0]) < 1e-8);
    CHECK(s.xi[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(s.prices[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(verify_optimality(p, s) < 1e-8);
  }
  SUBCASE("bounded L = 2, A = (1), K = [0.5, 1.5]") {
    const MemProblem p = single({1.0}, 0.5, 1.5);
    const MemSolution s = solve_mem(p, {}, SolveMode::bounded(2.0));
    CHECK(s.lambda[0] == 0.0);
    CHECK(s.xi[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.prices[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.iterations == 0);
  }
  SUBCASE("unbounded, A = (2, 1.5), K = [1.5, 2.5]: upper face active") {
    const MemProblem p = single({2.0, 1.5}, 1.5, 2.5);
    const oracle::Dual1d o = oracle::minimize_dual_1d({2.0, 1.5}, 1.5, 2.5, std::nullopt);
    CHECK(o.lambda == doctest::Approx(0.189).epsilon(5e-3));
    CHECK(o.price == doctest::Approx(2.5).epsilon(1e-12));
    const MemSolution s = solve_mem(p, {}, SolveMode::unbounded());
    CHECK(s.lambda[0] == doctest::Approx(o.lambda).epsilon(1e-7));
    CHECK(std::abs(s.prices[0] - 2.5) < 1e-3);
    CHECK(std::abs(s.prices[0] - o.price) < 1e-6);
    CHECK(verify_optimality(p, s) < 1e-6);
    CHECK(conservative_prices(p, s)[0] == doctest::Approx(2.5).epsilon(1e-6));
  }
}

TEST_CASE("solver output is internally consistent") {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd q = oracle::random_quantiles(rng, 3, 50);
  const MemProblem probe = build_discretization(QuantileGrid(q), std::vector<BidAskRange>(3, BidAskRange(1, 2)), 0.0);
  for (const SolveMode& mode : kModes) {
    const MemProblem p = build_discretization(QuantileGrid(q), oracle::feasible_boxes(rng, probe.a(), bound_of(mode), false), 0.0);
    const MemSolution s = solve_mem(p, {}, mode);
    CHECK(s.mode == mode);
    CHECK((s.xi - increments_from_multipliers(s.lambda, p, mode)).norm() == 0.0);
    CHECK((s.phi - p.t() * s.xi).cwiseAbs().maxCoeff() < 1e-9 * s.phi.maxCoeff());
    CHECK((s.prices - p.a() * s.xi).cwiseAbs().maxCoeff() < 1e-9 * s.prices.maxCoeff());
    CHECK(s.residual == verify_optimality(p, s));
    CHECK(s.dual_value == doctest::Approx(dual_entropy(s.lambda, p, mode)).epsilon(1e-12));
  }
}

TEST_CASE("conservative prices") {
  const MemProblem p = single({2.0, 1.5}, 1.5, 2.5);
  MemSolution zero = with_phi(Eigen::VectorXd::Zero(2));
  CHECK_THROWS_AS(conservative_prices(p, zero), IntegrityError);

  const MemProblem point = single({2.0, 1.5}, 2.2, 2.2);
  const MemSolution s = solve_mem(point, {}, SolveMode::unbounded());
  CHECK(std::abs(conservative_prices(point, s)[0] - 2.2) < 1e-6);
}

TEST_CASE("distortion reconstruction") {
  const MemProblem p3 = single({3.0, 2.0, 1.0}, 1.0, 10.0);
  SUBCASE("identity distortion from xi = e_1") {
    const DistortionCurve c = reconstruct_distortion(with_phi(Eigen::Vector3d(1, 0, 0)), p3);
    CHECK(c.g[0] == 0.0);
    for (Eigen::Index k = 0; k <= 3; ++k) CHECK(c.g[k] == doctest::Approx(c.v[k]).epsilon(1e-15));
    CHECK(c.total_mass == doctest::Approx(1.0));
  }
  SUBCASE("constant phi = c gives g = c v") {
    const DistortionCurve c = reconstruct_distortion(with_phi(Eigen::Vector3d(2.5, 0, 0)), p3);
    for (Eigen::Index k = 0; k <= 3; ++k) CHECK(c.g[k] == doctest::Approx(2.5 * c.v[k]).epsilon(1e-15));
  }
  SUBCASE("phi = (1, 2) on two cells") {
    const MemProblem p2 = single({2.0, 1.5}, 1.0, 3.0);
    const DistortionCurve c = reconstruct_distortion(with_phi(Eigen::Vector2d(1, 1)), p2);
    REQUIRE(c.g.size() == 3);
    CHECK(c.g[0] == 0.0);
    CHECK(c.g[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c.g[2] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(c.gprime == Eigen::Vector2d(1, 2));
    CHECK(c.u == Eigen::Vector2d(0.5, 1.0));
  }
  SUBCASE("decreasing phi is an integrity error") {
    MemSolution s;
    s.phi = Eigen::Vector3d(1.0, 2.0, 1.5);
    s.xi = Eigen::Vector3d(1.0, 1.0, -0.5);
    CHECK_THROWS_AS(reconstruct_distortion(s, p3), IntegrityError);
  }
}

TEST_CASE("optimality residual") {
  const MemProblem p = single({1.0}, 1.0, 1.0);
  MemSolution s;
  s.mode = SolveMode::unbounded();
  s.lambda = Eigen::VectorXd::Zero(1);
  CHECK(verify_optimality(p, s) == 0.0);
  s.lambda[0] = 0.1;
  CHECK(verify_optimality(p, s) > 0.0);
  // 1 - e^{-0.1}: smooth part -e^{-0.1} plus the active ask 1
  CHECK(verify_optimality(p, s) == doctest::Approx(1.0 - std::exp(-0.1)).epsilon(1e-14));

  const MemProblem q = single({2.0, 1.5}, 1.5, 2.5);
  const oracle::Dual1d o = oracle::minimize_dual_1d({2.0, 1.5}, 1.5, 2.5, std::nullopt);
  CHECK(optimality_residual(Eigen::VectorXd::Constant(1, o.lambda), q, SolveMode::unbounded()) < 1e-6);
}

TEST_CASE("dual entropy is midpoint convex") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const SolveMode& mode : kModes) {
    const Eigen::MatrixXd q = oracle::random_quantiles(rng, 3, 40);
    const MemProblem p = build_discretization(
        QuantileGrid(q), {BidAskRange(10, 11), BidAskRange(20, 24), BidAskRange(5, 5)}, 0.0);
    const double scale = 2.0 / p.a().maxCoeff();
    for (int rep = 0; rep < 200; ++rep) {
      Eigen::Vector3d x, y;
      for (int i = 0; i < 3; ++i) {
        x[i] = scale * u(rng);
        y[i] = scale * u(rng);
      }
      const double mid = dual_entropy(0.5 * (x + y), p, mode);
      CHECK(mid <= 0.5 * (dual_entropy(x, p, mode) + dual_entropy(y, p, mode)) + 1e-12);
    }
  }
}

TEST_CASE("random feasible instances are solved inside their boxes") {
  std::mt19937_64 rng(12);
  for (const SolveMode& mode : kModes) {
    for (int rep = 0; rep < 30; ++rep) {
      const int m = 1 + rep % 5;
      const int n = 10 + (rep * 7) % 91;
      const Eigen::MatrixXd q = oracle::random_quantiles(rng, m, n);
      const MemProblem probe =
          build_discretization(QuantileGrid(q), std::vector<BidAskRange>(m, BidAskRange(1, 2)), 0.0);
      const MemProblem p =
          build_discretization(QuantileGrid(q), oracle::feasible_boxes(rng, probe.a(), bound_of(mode), false), 0.0);
      const MemSolution s = solve_mem(p, {}, mode);
      CHECK((s.xi.array() >= 0).all());
      if (mode.is_bounded()) CHECK((s.xi.array() <= mode.bound()).all());
      CHECK(s.residual < 1e-8);
      CHECK_NOTHROW(conservative_prices(p, s, 1e-6));
      for (Eigen::Index j = 1; j < n; ++j) CHECK(s.phi[j] >= s.phi[j - 1]);
      const DistortionCurve c = reconstruct_distortion(s, p);
      CHECK(c.g[0] == 0.0);
      for (Eigen::Index k = 1; k < n; ++k) CHECK(c.g[k + 1] - 2 * c.g[k] + c.g[k - 1] <= 1e-12);
      for (Eigen::Index k = 1; k <= n; ++k) CHECK(c.g[k] >= c.g[k - 1]);
    }
  }
}

TEST_CASE("pointwise boxes are matched exactly") {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 10; ++rep) {
    const int m = 1 + rep % 4;
    const Eigen::MatrixXd q = oracle::random_quantiles(rng, m, 30);
    const MemProblem probe =
        build_discretization(QuantileGrid(q), std::vector<BidAskRange>(m, BidAskRange(1, 2)), 0.0);
    const auto boxes = oracle::feasible_boxes(rng, probe.a(), std::nullopt, true);
    const MemProblem p = build_discretization(QuantileGrid(q), boxes, 0.0);
    const MemSolution s = solve_mem(p, {}, SolveMode::unbounded());
    for (int i = 0; i < m; ++i) CHECK(std::abs(s.prices[i] - boxes[i].bid()) < 1e-6);
  }
}

TEST_CASE("single-asset prices agree with the grid-and-bisection oracle") {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const SolveMode& mode : kModes) {
    for (int rep = 0; rep < 25; ++rep) {
      const int n = 2 + rep * 2;
      const Eigen::MatrixXd q = oracle::random_quantiles(rng, 1, n);
      std::vector<double> qs(q.data(), q.data() + n);
      const auto a = oracle::a_row(qs);
      double total = 0.0;
      for (double x : a) total += x;
      const double cap = mode.is_bounded() ? 0.9 * mode.bound() * total : 2.0 * total;
      const double lo = 0.05 * total + u(rng) * (cap - 0.05 * total);
      const double hi = std::min(lo * (1.0 + 0.1 * u(rng)), cap);
      const MemProblem p = build_discretization(QuantileGrid(q), {BidAskRange(lo, hi)}, 0.0);
      const oracle::Dual1d o = oracle::minimize_dual_1d(a, lo, hi, bound_of(mode));
      const MemSolution s = solve_mem(p, {}, mode);
      CHECK(std::abs(s.prices[0] - o.price) < 1e-4);
    }
  }
}

TEST_CASE("bounded and unbounded both land in the boxes") {
  std::mt19937_64 rng(18);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd q = oracle::random_quantiles(rng, 4, 60);
    const MemProblem probe =
        build_discretization(QuantileGrid(q), std::vector<BidAskRange>(4, BidAskRange(1, 2)), 0.0);
    const MemProblem p =
        build_discretization(QuantileGrid(q), oracle::feasible_boxes(rng, probe.a(), std::nullopt, false), 0.0);
    for (const SolveMode& mode : kModes) {
      const MemSolution s = solve_mem(p, {}, mode);
      CHECK_NOTHROW(conservative_prices(p, s, 1e-6));
    }
  }
}

TEST_CASE("projected gradient on the split multipliers reaches the same prices") {
  std::mt19937_64 rng(20);
  SolverOptions opts;
  opts.method = SolverMethod::projected_gradient;
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::MatrixXd q = oracle::random_quantiles(rng, 1 + rep % 3, 10 + 10 * rep);
    const MemProblem probe = build_discretization(
        QuantileGrid(q), std::vector<BidAskRange>(q.rows(), BidAskRange(1, 2)), 0.0);
    const MemProblem p =
        build_discretization(QuantileGrid(q), oracle::feasible_boxes(rng, probe.a(), std::nullopt, false), 0.0);
    const MemSolution newton = solve_mem(p, {}, SolveMode::unbounded());
    const MemSolution gradient = solve_mem(p, opts, SolveMode::unbounded());
    CHECK(gradient.residual < 1e-8);
    CHECK((newton.prices - gradient.prices).cwiseAbs().maxCoeff() < 1e-6);
  }
  const MemProblem trivial = single({2.0, 1.5}, 1.5, 2.5);
  CHECK(std::abs(solve_mem(trivial, opts, SolveMode::unbounded()).prices[0] - 2.5) < 1e-6);
}

TEST_CASE("boxes outside the price cone do not converge") {
  // The second row is twice the first, so A xi can only reach prices (y, 2y).
  Eigen::MatrixXd a(2, 2);
  a << 2.0, 1.0, 4.0, 2.0;
  const MemProblem p = MemProblem::from_matrix(a, {BidAskRange(1.0, 1.1), BidAskRange(5.0, 6.0)});
  SolverOptions opts;
  opts.max_iterations = 200;
  try {
    solve_mem(p, opts, SolveMode::unbounded());
    FAIL("expected nonconvergence");
  } catch (const MemNonConvergence& e) {
    CHECK(e.best().lambda.size() == 2);
    CHECK(e.best().residual > 1e-8);
  }
}

TEST_CASE("solver options are validated") {
  SolverOptions o;
  o.tolerance = 0.0;
  CHECK_THROWS_AS(o.validate(), DomainError);
  o = {};
  o.max_iterations = 0;
  CHECK_THROWS_AS(o.validate(), DomainError);
  CHECK_THROWS_AS(SolveMode::bounded(0.0), DomainError);
  CHECK_THROWS_AS(SolveMode::bounded(-1.0), DomainError);
  CHECK(SolveMode::bounded(3.0).bound() == 3.0);
}
