#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "spanrank/instance_set.hpp"
#include "spanrank/rng.hpp"

// Independent reference implementations used as test oracles. These must not
// share code paths with the library routines they check.
namespace testutil {

inline Eigen::MatrixXd random_matrix(spanrank::Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                     double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline Eigen::MatrixXd random_spd(spanrank::Rng& rng, Eigen::Index n) {
  const Eigen::MatrixXd m = random_matrix(rng, n, n);
  return m.transpose() * m + 0.3 * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::MatrixXd random_invertible(spanrank::Rng& rng, Eigen::Index n) {
  for (;;) {
    Eigen::MatrixXd m = random_matrix(rng, n, n);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    if (svd.singularValues()(n - 1) > 1e-3 * svd.singularValues()(0) &&
        svd.singularValues()(n - 1) > 1e-6)
      return m;
  }
}

/// Labeled set with guaranteed class coverage (first c rows carry 0..c-1).
inline spanrank::LabeledInstanceSet random_instances(spanrank::Rng& rng, Eigen::Index n,
                                                     Eigen::Index d, int c) {
  spanrank::LabeledInstanceSet set;
  set.num_classes = c;
  set.data = random_matrix(rng, n, d, -2.0, 2.0);
  set.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    set.labels[i] = i < c ? static_cast<int>(i) : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(c)));
  return set;
}

/// Entry-by-entry triple-loop matrix product.
inline Eigen::MatrixXd matmul_naive(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

/// Exhaustive Otsu split: recomputes both class statistics from scratch for
/// every candidate split, keeping the smallest argmax. Returns 0 for a
/// degenerate (zero-range) input.
inline int otsu_split_exhaustive(const Eigen::VectorXd& scores, int bins) {
  const double lo = scores.minCoeff();
  const double hi = scores.maxCoeff();
  if (!(hi > lo) || bins < 2) return 0;
  std::vector<long long> hist(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    auto b = static_cast<long long>((scores[i] - lo) / (hi - lo) * bins);
    b = std::clamp<long long>(b, 0, bins - 1);
    hist[static_cast<std::size_t>(b)]++;
  }
  int best_bin = 0;
  double best = -1.0;
  for (int split = 1; split < bins; ++split) {
    long long n0 = 0, n1 = 0;
    double s0 = 0.0, s1 = 0.0;
    for (int b = 0; b < bins; ++b) {
      if (b < split) {
        n0 += hist[static_cast<std::size_t>(b)];
        s0 += static_cast<double>(b) * static_cast<double>(hist[static_cast<std::size_t>(b)]);
      } else {
        n1 += hist[static_cast<std::size_t>(b)];
        s1 += static_cast<double>(b) * static_cast<double>(hist[static_cast<std::size_t>(b)]);
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const double total = static_cast<double>(n0 + n1);
    const double w0 = static_cast<double>(n0) / total;
    const double w1 = static_cast<double>(n1) / total;
    const double mu0 = s0 / static_cast<double>(n0);
    const double mu1 = s1 / static_cast<double>(n1);
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_bin = split;
    }
  }
  return best_bin;
}

/// Direct two-pass per-row reference for the one-vs-all pooled-variance
/// criterion, including the documented denominator floor.
inline Eigen::VectorXd t_criterion_reference(const Eigen::MatrixXd& v, Eigen::Index held) {
  const Eigen::Index n = v.rows();
  const Eigen::Index c = v.cols();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> group;
    for (Eigen::Index j = 0; j < c; ++j)
      if (j != held) group.push_back(v(i, j));
    double mean = 0.0;
    for (const double g : group) mean += g;
    mean /= static_cast<double>(group.size());
    double var = 0.0;
    for (const double g : group) var += (g - mean) * (g - mean);
    var /= static_cast<double>(group.size() - 1);
    double sd = std::sqrt(var);
    sd = std::max(sd, 1e-12 + 1e-9 * std::abs(mean));
    const double denom = sd * std::sqrt(1.0 + 1.0 / static_cast<double>(group.size()));
    out[i] = std::abs(v(i, held) - mean) / denom;
  }
  return out;
}

inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

/// Quadruple-loop true convolution with symmetric reflect padding.
inline Eigen::MatrixXd convolve_naive(const Eigen::MatrixXd& plane, const Eigen::MatrixXd& kernel) {
  const int rows = static_cast<int>(plane.rows());
  const int cols = static_cast<int>(plane.cols());
  const int half = static_cast<int>(kernel.rows()) / 2;
  Eigen::MatrixXd out(rows, cols);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (int u = 0; u < kernel.rows(); ++u)
        for (int v = 0; v < kernel.cols(); ++v) {
          const int sy = reflect_index(y - (u - half), rows);
          const int sx = reflect_index(x - (v - half), cols);
          acc += kernel(u, v) * plane(sy, sx);
        }
      out(y, x) = acc;
    }
  }
  return out;
}

/// Quarter-turn rotation matching the kernel grid convention.
inline Eigen::MatrixXd rotate_quarter(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) out(r, c) = m(n - 1 - c, r);
  return out;
}

/// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("spanrank_" + tag + "_" + std::to_string(counter.fetch_add(1)) + "_" +
             std::to_string(static_cast<unsigned>(::getpid())));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
