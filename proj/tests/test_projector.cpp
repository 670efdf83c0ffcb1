#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "helpers.hpp"
#include "spanrank/projector.hpp"

using namespace spanrank;

namespace {

ScatterPair diagonal_pair(const Eigen::VectorXd& sw, const Eigen::VectorXd& sb) {
  ScatterPair sp;
  sp.sw_spanned = sw;
  sp.sb_spanned = sb;
  return sp;
}

ScatterPair random_pair(Rng& rng, Eigen::Index c) {
  Eigen::VectorXd sw(c), sb(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    sw[j] = rng.uniform(0.1, 3.0);
    sb[j] = rng.uniform(0.1, 3.0);
  }
  return diagonal_pair(sw, sb);
}

}  // namespace

TEST_CASE("objective on the hand-worked single-row case") {
  Eigen::MatrixXd a(1, 2);
  a << 1, 0;
  const auto sp = diagonal_pair(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2));
  const ObjectiveValue value = objective(a, sp);
  CHECK(value.ratio == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(value.orthogonality == 0.0);
  CHECK(value.total == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("orthonormal rows make the penalty vanish exactly") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 4);
  a(0, 1) = 1.0;
  a(1, 3) = 1.0;
  Rng rng(1);
  const ObjectiveValue value = objective(a, random_pair(rng, 4));
  CHECK(value.orthogonality == 0.0);
}

TEST_CASE("zero projection is a degenerate denominator") {
  const auto sp = diagonal_pair(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2));
  CHECK_THROWS_AS(objective(Eigen::MatrixXd::Zero(1, 2), sp), DegenerateDenominator);
  CHECK_THROWS_AS(gradient(Eigen::MatrixXd::Zero(1, 2), sp), DegenerateDenominator);
}

TEST_CASE("gradient matches central finite differences on seeded problems") {
  Rng rng(1234);
  int tested = 0;
  while (tested < 50) {
    const int c = 2 + static_cast<int>(rng.next_below(11));
    const auto d = static_cast<Eigen::Index>(1 + rng.next_below(static_cast<std::uint64_t>(c - 1)));
    const ScatterPair sp = random_pair(rng, c);
    const Eigen::MatrixXd a = testutil::random_matrix(rng, d, c, -1.0, 1.0);
    ObjectiveValue at_a;
    try {
      at_a = objective(a, sp);
    } catch (const DegenerateDenominator&) {
      continue;
    }
    if (at_a.orthogonality < 1e-6) continue;  // stay clear of the nonsmooth point
    ++tested;

    const Eigen::MatrixXd analytic = gradient(a, sp);
    const double step = 1e-6;
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < c; ++j) {
        Eigen::MatrixXd lo = a, hi = a;
        lo(i, j) -= step;
        hi(i, j) += step;
        const double fd = (objective(hi, sp).total - objective(lo, sp).total) / (2.0 * step);
        const double got = analytic(i, j);
        if (std::abs(fd) < 1e-8)
          CHECK(std::abs(got - fd) <= 1e-5);
        else
          CHECK(std::abs(got - fd) <= 1e-5 * std::abs(fd));
      }
  }
}

TEST_CASE("orthogonality gradient is zero at orthonormal points") {
  Rng rng(4);
  const ScatterPair sp = random_pair(rng, 6);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 6);
  a(0, 2) = 1.0;
  a(1, 5) = 1.0;
  // With the penalty term at its nonsmooth zero the weight cannot matter.
  const Eigen::MatrixXd weighted = gradient(a, sp, 1.0);
  const Eigen::MatrixXd ratio_only = gradient(a, sp, 0.0);
  CHECK((weighted - ratio_only).norm() == 0.0);
}

TEST_CASE("ratio gradient cancels when both scatters match") {
  Rng rng(5);
  const Eigen::VectorXd diag = Eigen::VectorXd::Constant(5, 1.7);
  const ScatterPair sp = diagonal_pair(diag, diag);
  const Eigen::MatrixXd a = testutil::random_matrix(rng, 3, 5);
  const Eigen::MatrixXd grad = gradient(a, sp, 0.0);  // weight 0 isolates the ratio term
  CHECK(grad.norm() <= 1e-12);
}

TEST_CASE("ratio is scale invariant") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const ScatterPair sp = random_pair(rng, 6);
    const Eigen::MatrixXd a = testutil::random_matrix(rng, 2, 6);
    const double alpha = rng.uniform(0.1, 10.0) * (rng.next_below(2) ? 1.0 : -1.0);
    const double base = objective(a, sp).ratio;
    const double scaled = objective((alpha * a).eval(), sp).ratio;
    CHECK(std::abs(base - scaled) <= 1e-10 * std::abs(base));
  }
}

TEST_CASE("stationary start returns immediately as converged") {
  // Equal scatters flatten the ratio; orthonormal rows zero the penalty, so
  // the gradient vanishes at the start.
  const ScatterPair sp =
      diagonal_pair(Eigen::VectorXd::Constant(4, 2.0), Eigen::VectorXd::Constant(4, 2.0));
  Eigen::MatrixXd a0 = Eigen::MatrixXd::Zero(2, 4);
  a0(0, 0) = 1.0;
  a0(1, 1) = 1.0;
  const auto [result, trace] = fista_optimize(a0, sp);
  CHECK(trace.converged);
  CHECK(trace.iterations_run <= 2);
  CHECK((result - a0).norm() == 0.0);
}

TEST_CASE("seeded random problem strictly improves objective and penalty") {
  Rng rng(42);
  const ScatterPair sp = random_pair(rng, 5);
  const Eigen::MatrixXd a0 = testutil::random_matrix(rng, 2, 5);
  SolverConfig cfg;
  const auto [result, trace] = fista_optimize(a0, sp, cfg);
  REQUIRE(trace.objective_history.size() >= 2);
  const ObjectiveValue first = trace.objective_history.front();
  const ObjectiveValue last = trace.objective_history.back();
  CHECK(last.total < first.total);
  CHECK(last.orthogonality <= first.orthogonality);
  CHECK(objective(result, sp).total == doctest::Approx(last.total));
}

TEST_CASE("accepted objectives never increase") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const int c = 3 + static_cast<int>(rng.next_below(8));
    const auto d = static_cast<Eigen::Index>(1 + rng.next_below(static_cast<std::uint64_t>(c - 1)));
    const ScatterPair sp = random_pair(rng, c);
    const Eigen::MatrixXd a0 = testutil::random_matrix(rng, d, c);
    const auto [result, trace] = fista_optimize(a0, sp);
    (void)result;
    for (std::size_t i = 1; i < trace.objective_history.size(); ++i)
      CHECK(trace.objective_history[i].total <=
            trace.objective_history[i - 1].total + 1e-12);
  }
}

TEST_CASE("zero iteration budget returns the start unconverged") {
  Rng rng(8);
  const ScatterPair sp = random_pair(rng, 4);
  const Eigen::MatrixXd a0 = testutil::random_matrix(rng, 2, 4);
  SolverConfig cfg;
  cfg.max_iterations = 0;
  const auto [result, trace] = fista_optimize(a0, sp, cfg);
  CHECK((result - a0).norm() == 0.0);
  CHECK_FALSE(trace.converged);
  CHECK(trace.iterations_run == 0);
}

TEST_CASE("projection multiplies instances into class space") {
  Eigen::MatrixXd r(2, 1);
  r << 2, 3;
  Eigen::MatrixXd a(1, 2);
  a << 1, 0;
  const Eigen::MatrixXd v = project(r, a);
  CHECK(v(0, 0) == 2.0);
  CHECK(v(0, 1) == 0.0);
  CHECK(v(1, 0) == 3.0);
  CHECK(v(1, 1) == 0.0);
}

TEST_CASE("zero projection annihilates") {
  Rng rng(9);
  const Eigen::MatrixXd r = testutil::random_matrix(rng, 5, 3);
  CHECK(project(r, Eigen::MatrixXd::Zero(3, 4)).norm() == 0.0);
}

TEST_CASE("projection matches the naive product and is linear") {
  Rng rng(10);
  const Eigen::MatrixXd r = testutil::random_matrix(rng, 4, 2);
  const Eigen::MatrixXd a1 = testutil::random_matrix(rng, 2, 3);
  const Eigen::MatrixXd a2 = testutil::random_matrix(rng, 2, 3);
  CHECK((project(r, a1) - testutil::matmul_naive(r, a1)).cwiseAbs().maxCoeff() <= 1e-12);
  const Eigen::MatrixXd sum = project(r, (a1 + a2).eval());
  CHECK((sum - (project(r, a1) + project(r, a2))).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("projection rejects mismatched shapes") {
  CHECK_THROWS_AS(project(Eigen::MatrixXd::Zero(4, 3), Eigen::MatrixXd::Zero(2, 5)),
                  DimensionError);
}

TEST_CASE("solver config validation") {
  SolverConfig cfg;
  cfg.backtrack_factor = 1.5;
  const ScatterPair sp =
      diagonal_pair(Eigen::Vector2d::Ones(), Eigen::Vector2d::Ones());
  CHECK_THROWS_AS(fista_optimize(Eigen::MatrixXd::Ones(1, 2), sp, cfg), InvalidSpec);
}
