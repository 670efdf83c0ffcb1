#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "helpers.hpp"
#include "spanrank/ranksel.hpp"

using namespace spanrank;

TEST_CASE("one-vs-all criterion on the hand-worked row") {
  Eigen::MatrixXd v(1, 4);
  v << 4, 0, 2, 1;
  const Eigen::VectorXd crit = one_vs_all_criterion(v, 0);
  CHECK(crit[0] == doctest::Approx(3.0 * std::sqrt(3.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("constant rows score zero") {
  Eigen::MatrixXd v = Eigen::MatrixXd::Constant(3, 5, 2.5);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const Eigen::VectorXd crit = one_vs_all_criterion(v, i);
    CHECK(crit.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("zero rest-variance engages the denominator floor") {
  Eigen::MatrixXd v(1, 4);
  v << 5, 1, 1, 1;
  const Eigen::VectorXd crit = one_vs_all_criterion(v, 0);
  const double expected = 4.0 / ((1e-12 + 1e-9 * 1.0) * std::sqrt(4.0 / 3.0));
  CHECK(crit[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::isfinite(crit[0]));
  CHECK(crit[0] > 1e8);
}

TEST_CASE("criterion matches the direct two-pass reference") {
  Rng rng(404);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.next_below(40));
    const auto c = static_cast<Eigen::Index>(3 + rng.next_below(9));
    const Eigen::MatrixXd v = testutil::random_matrix(rng, n, c, -4.0, 4.0);
    for (Eigen::Index held = 0; held < c; ++held) {
      const Eigen::VectorXd got = one_vs_all_criterion(v, held);
      const Eigen::VectorXd expected = testutil::t_criterion_reference(v, held);
      for (Eigen::Index i = 0; i < n; ++i)
        CHECK(std::abs(got[i] - expected[i]) <= 1e-12 * std::max(1.0, std::abs(expected[i])));
    }
  }
}

TEST_CASE("criterion is invariant to shifting a whole row") {
  Rng rng(11);
  Eigen::MatrixXd v = testutil::random_matrix(rng, 6, 5);
  Eigen::MatrixXd shifted = v;
  shifted.row(2).array() += 1000.0;
  for (Eigen::Index held = 0; held < 5; ++held) {
    const Eigen::VectorXd base = one_vs_all_criterion(v, held);
    const Eigen::VectorXd moved = one_vs_all_criterion(shifted, held);
    CHECK(std::abs(base[2] - moved[2]) <= 1e-10);
  }
}

TEST_CASE("criterion dimension errors") {
  const Eigen::MatrixXd two_cols = Eigen::MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(one_vs_all_criterion(two_cols, 0), DimensionError);
  const Eigen::MatrixXd ok = Eigen::MatrixXd::Zero(3, 4);
  CHECK_THROWS_AS(one_vs_all_criterion(ok, 4), DimensionError);
  CHECK_THROWS_AS(one_vs_all_criterion(ok, -1), DimensionError);
}

TEST_CASE("aggregate scores are row sums") {
  CHECK(aggregate_scores(Eigen::MatrixXd::Zero(4, 3)).cwiseAbs().maxCoeff() == 0.0);
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 0, 0, 1;
  const Eigen::VectorXd score = aggregate_scores(m);
  CHECK(score[0] == 6.0);
  CHECK(score[1] == 1.0);
  Eigen::MatrixXd permuted(2, 3);
  permuted << 3, 1, 2, 1, 0, 0;
  CHECK((aggregate_scores(permuted) - score).norm() == 0.0);
}

TEST_CASE("otsu threshold of a constant vector selects everything") {
  const Eigen::VectorXd scores = Eigen::VectorXd::Constant(9, 7.0);
  CHECK(otsu_threshold(scores) == 7.0);
  const RankingReport report = [&] {
    RankingReport r;
    r.score = scores;
    r.threshold = otsu_threshold(scores);
    r.mask = r.score.array() >= r.threshold;
    return r;
  }();
  CHECK(report.mask.count() == 9);
}

TEST_CASE("otsu threshold matches the exhaustive oracle on the spike cases") {
  Eigen::VectorXd a(6);
  a << 1, 1, 2, 9, 10, 10;
  const OtsuResult ra = otsu_split(a, 256);
  CHECK(ra.split_bin == testutil::otsu_split_exhaustive(a, 256));
  CHECK(ra.threshold > 2.0);
  CHECK(ra.threshold <= 9.0);

  Eigen::VectorXd b(6);
  b << 0, 0, 0, 10, 10, 10;
  const OtsuResult rb = otsu_split(b, 256);
  CHECK(rb.split_bin == testutil::otsu_split_exhaustive(b, 256));
  CHECK(rb.threshold > 0.0);
  CHECK(rb.threshold <= 10.0);
}

TEST_CASE("otsu threshold matches the exhaustive oracle on random vectors") {
  Rng rng(515);
  for (int trial = 0; trial < 60; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.next_below(3000));
    Eigen::VectorXd scores(n);
    const int shape = static_cast<int>(rng.next_below(3));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (shape == 0)
        scores[i] = rng.uniform(0.0, 10.0);
      else if (shape == 1)
        scores[i] = rng.next_below(2) ? rng.uniform(0.0, 1.0) : rng.uniform(8.0, 9.0);
      else
        scores[i] = 3.5;  // all equal
    }
    const int bins = 2 + static_cast<int>(rng.next_below(512));
    CHECK(otsu_split(scores, bins).split_bin == testutil::otsu_split_exhaustive(scores, bins));
  }
}

TEST_CASE("otsu rejects empty input") {
  CHECK_THROWS_AS(otsu_threshold(Eigen::VectorXd{}), DimensionError);
}

TEST_CASE("ranking report is internally consistent") {
  Rng rng(616);
  const Eigen::MatrixXd v = testutil::random_matrix(rng, 40, 5, -3.0, 3.0);
  const RankingReport report = rank_instances(v, 64);
  CHECK(report.criterion.minCoeff() >= 0.0);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    CHECK(std::abs(report.score[i] - report.criterion.row(i).sum()) <= 1e-12);
    CHECK(report.mask[i] == (report.score[i] >= report.threshold));
  }
  // Determinism: identical input gives a bit-identical report.
  const RankingReport again = rank_instances(v, 64);
  CHECK((again.score - report.score).norm() == 0.0);
  CHECK(again.threshold == report.threshold);
  CHECK((again.mask == report.mask).all());
}

TEST_CASE("selection keeps rows at or above the threshold") {
  Eigen::MatrixXd v(3, 3);
  v << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  RankingReport report;
  report.score.resize(3);
  report.score << 5, 5, 0.1;
  report.threshold = 2.0;
  report.mask = report.score.array() >= report.threshold;

  const auto [selected, indices] = select(v, report);
  REQUIRE(indices.size() == 2);
  CHECK(indices[0] == 0);
  CHECK(indices[1] == 1);
  CHECK((selected.row(0) - v.row(0)).norm() == 0.0);
  CHECK((selected.row(1) - v.row(1)).norm() == 0.0);

  report.threshold = report.score.minCoeff();
  report.mask = report.score.array() >= report.threshold;
  CHECK(select(v, report).second.size() == 3);

  report.threshold = 100.0;
  report.mask = report.score.array() >= report.threshold;
  CHECK_THROWS_AS(select(v, report), EmptySelection);
}

TEST_CASE("top-m convenience keeps the highest scores in original order") {
  Eigen::VectorXd score(5);
  score << 0.5, 9, 1, 9, 3;
  const auto kept = top_m_indices(score, 3);
  REQUIRE(kept.size() == 3);
  CHECK(kept[0] == 1);
  CHECK(kept[1] == 3);
  CHECK(kept[2] == 4);
}

TEST_CASE("scalar-generic kernels accept float inputs") {
  Eigen::MatrixXf v(2, 3);
  v << 1.f, 2.f, 3.f, 4.f, 5.f, 6.f;
  const Eigen::VectorXd crit = one_vs_all_criterion(v, 0);
  CHECK(crit.size() == 2);
  Eigen::VectorXf scores(4);
  scores << 1.f, 1.f, 8.f, 8.f;
  CHECK(otsu_threshold(scores) > 1.0);
}
