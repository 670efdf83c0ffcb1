#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spanrank/errors.hpp"

namespace spanrank {

/// Per-class criterion values, aggregate scores, the adaptive threshold and
/// the resulting keep mask for one projected instance set.
struct RankingReport {
  Eigen::MatrixXd criterion;               // N x c, absolute t-values
  Eigen::VectorXd score;                   // N row sums
  double threshold = 0.0;
  Eigen::Array<bool, Eigen::Dynamic, 1> mask;  // score >= threshold
};

/// Chosen histogram split and the score value it corresponds to.
struct OtsuResult {
  int split_bin = 0;   // first bin of the upper class; 0 when degenerate
  double threshold = 0.0;  // lower edge of that bin
};

/// Absolute one-vs-all pooled-variance t statistic of column i against the
/// merged remaining columns, evaluated independently per row. With a single
/// sample in the held-out group the pooled variance reduces to the unbiased
/// variance of the rest, which needs c >= 3. The denominator is floored at
/// 1e-12 + 1e-9*|mean| so constant rows score zero instead of dividing by
/// zero.
template <typename Derived>
Eigen::VectorXd one_vs_all_criterion(const Eigen::MatrixBase<Derived>& v, Eigen::Index class_index) {
  const Eigen::Index n = v.rows();
  const Eigen::Index c = v.cols();
  if (c < 3)
    throw DimensionError("one_vs_all_criterion: needs at least 3 columns, got " +
                         std::to_string(c));
  if (class_index < 0 || class_index >= c)
    throw DimensionError("one_vs_all_criterion: class index out of range");

  const Eigen::ArrayXd held = v.col(class_index).template cast<double>().array();
  const Eigen::ArrayXd row_sum = v.rowwise().sum().template cast<double>().array();
  const double n0 = static_cast<double>(c - 1);
  const Eigen::ArrayXd rest_mean = (row_sum - held) / n0;

  Eigen::ArrayXd centered_sq = Eigen::ArrayXd::Zero(n);
  for (Eigen::Index k = 0; k < c; ++k) {
    if (k == class_index) continue;
    centered_sq += (v.col(k).template cast<double>().array() - rest_mean).square();
  }
  const Eigen::ArrayXd pooled_sd = (centered_sq / static_cast<double>(c - 2)).sqrt();
  const Eigen::ArrayXd floored = pooled_sd.max(1e-12 + 1e-9 * rest_mean.abs());
  const double scale = std::sqrt(1.0 + 1.0 / n0);
  return ((held - rest_mean).abs() / (floored * scale)).matrix();
}

/// Row sums of the criterion matrix; higher means better separated.
template <typename Derived>
Eigen::VectorXd aggregate_scores(const Eigen::MatrixBase<Derived>& criterion) {
  return criterion.rowwise().sum().template cast<double>();
}

/// Otsu's threshold over an equal-width histogram of the scores: picks the
/// split maximizing the between-class variance w0*w1*(mu0-mu1)^2, ties going
/// to the smallest split, and returns the lower edge of the chosen bin.
/// A zero-range input returns the common value (everything selected).
template <typename Derived>
OtsuResult otsu_split(const Eigen::DenseBase<Derived>& scores, int bins = 256) {
  const Eigen::Index n = scores.size();
  if (n < 1) throw DimensionError("otsu: empty score vector");
  if (bins < 1) throw DimensionError("otsu: bins must be positive");
  const Eigen::ArrayXd s = scores.derived().template cast<double>().array();
  if (!s.allFinite()) throw Error("otsu: non-finite scores");

  const double lo = s.minCoeff();
  const double hi = s.maxCoeff();
  OtsuResult result;
  result.threshold = lo;
  if (!(hi > lo) || bins < 2) return result;

  std::vector<std::int64_t> hist(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Ratio-first mapping stays finite even when the range is denormal.
    auto b = static_cast<Eigen::Index>((s[i] - lo) / (hi - lo) * static_cast<double>(bins));
    b = std::clamp<Eigen::Index>(b, 0, bins - 1);
    hist[static_cast<std::size_t>(b)]++;
  }

  double total_level = 0.0;
  for (int b = 0; b < bins; ++b) total_level += static_cast<double>(b) * static_cast<double>(hist[static_cast<std::size_t>(b)]);

  double best = -1.0;
  double count_low = 0.0;
  double level_low = 0.0;
  const double count_all = static_cast<double>(n);
  for (int b = 1; b < bins; ++b) {
    count_low += static_cast<double>(hist[static_cast<std::size_t>(b - 1)]);
    level_low += static_cast<double>(b - 1) * static_cast<double>(hist[static_cast<std::size_t>(b - 1)]);
    const double count_high = count_all - count_low;
    if (count_low == 0.0 || count_high == 0.0) continue;
    const double mean_low = level_low / count_low;
    const double mean_high = (total_level - level_low) / count_high;
    const double between = (count_low / count_all) * (count_high / count_all) *
                           (mean_low - mean_high) * (mean_low - mean_high);
    if (between > best) {
      best = between;
      result.split_bin = b;
    }
  }
  result.threshold = lo + static_cast<double>(result.split_bin) * (hi - lo) / static_cast<double>(bins);
  return result;
}

template <typename Derived>
double otsu_threshold(const Eigen::DenseBase<Derived>& scores, int bins = 256) {
  return otsu_split(scores, bins).threshold;
}

/// Full ranking report for a projected instance set: per-class criteria,
/// aggregate score, Otsu threshold, keep mask.
template <typename Derived>
RankingReport rank_instances(const Eigen::MatrixBase<Derived>& v, int bins = 256) {
  RankingReport report;
  const Eigen::Index n = v.rows();
  const Eigen::Index c = v.cols();
  report.criterion.resize(n, c);
  for (Eigen::Index i = 0; i < c; ++i) report.criterion.col(i) = one_vs_all_criterion(v, i);
  report.score = aggregate_scores(report.criterion);
  report.threshold = otsu_threshold(report.score, bins);
  report.mask = report.score.array() >= report.threshold;
  return report;
}

/// Keeps the rows whose score clears the threshold, in original order, and
/// reports their original indices. Throws EmptySelection when nothing
/// survives so callers can apply their fallback.
inline std::pair<Eigen::MatrixXd, std::vector<Eigen::Index>> select(const Eigen::MatrixXd& v,
                                                                    const RankingReport& report) {
  if (report.score.size() != v.rows() || report.mask.size() != v.rows())
    throw DimensionError("select: report does not match instance count");
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    if (report.mask[i]) kept.push_back(i);
  if (kept.empty()) throw EmptySelection("select: threshold removed every instance");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(kept.size()), v.cols());
  for (std::size_t r = 0; r < kept.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = v.row(kept[r]);
  return {out, kept};
}

/// Convenience alternative to adaptive thresholding: indices of the m
/// highest-scoring rows (ties to the lower index), in original order.
inline std::vector<Eigen::Index> top_m_indices(const Eigen::VectorXd& score, Eigen::Index m) {
  if (m < 1) throw DimensionError("top_m_indices: m must be >= 1");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(score.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return score[a] > score[b]; });
  order.resize(static_cast<std::size_t>(std::min<Eigen::Index>(m, score.size())));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace spanrank
