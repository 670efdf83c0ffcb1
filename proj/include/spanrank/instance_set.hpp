#pragma once

#include <Eigen/Dense>

#include <string>

#include "spanrank/errors.hpp"

namespace spanrank {

/// N low-dimensional instances with integer class labels in [0, num_classes).
struct LabeledInstanceSet {
  Eigen::MatrixXd data;    // N x d
  Eigen::VectorXi labels;  // length N
  int num_classes = 0;

  Eigen::Index size() const { return data.rows(); }
  Eigen::Index dimension() const { return data.cols(); }

  /// Checks structural invariants: shapes, label range, class coverage,
  /// finite values. Throws on violation.
  void validate() const {
    if (num_classes < 2) throw DimensionError("instance set needs at least 2 classes");
    if (data.rows() < num_classes)
      throw DimensionError("instance set needs at least one instance per class");
    if (data.cols() < 1) throw DimensionError("instance dimension must be >= 1");
    if (labels.size() != data.rows())
      throw DimensionError("label count does not match instance count");
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(num_classes);
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      const int y = labels[i];
      if (y < 0 || y >= num_classes)
        throw DimensionError("label " + std::to_string(y) + " out of range at row " +
                             std::to_string(i));
      counts[y]++;
    }
    for (int j = 0; j < num_classes; ++j)
      if (counts[j] == 0) throw EmptyClass("class " + std::to_string(j) + " has no instances");
    if (!data.allFinite()) throw Error("instance data contains non-finite values");
  }
};

/// Per-class means, global mean and class counts.
struct ClassStatistics {
  Eigen::MatrixXd class_means;   // c x d
  Eigen::VectorXd global_mean;   // d
  Eigen::VectorXi class_counts;  // c
};

/// Means per class and over the whole set, with member counts.
/// Throws EmptyClass if some class index in [0, c) never occurs.
inline ClassStatistics class_stats(const LabeledInstanceSet& x) {
  const Eigen::Index n = x.size();
  const Eigen::Index d = x.dimension();
  const int c = x.num_classes;
  if (c < 1) throw DimensionError("num_classes must be positive");
  if (x.labels.size() != n) throw DimensionError("label count does not match instance count");

  ClassStatistics s;
  s.class_means = Eigen::MatrixXd::Zero(c, d);
  s.global_mean = Eigen::VectorXd::Zero(d);
  s.class_counts = Eigen::VectorXi::Zero(c);

  // Kahan-compensated accumulation; N can be millions of pixels.
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(c, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = x.labels[i];
    if (y < 0 || y >= c)
      throw DimensionError("label " + std::to_string(y) + " out of range at row " +
                           std::to_string(i));
    const auto term = (x.data.row(i) - comp.row(y)).eval();
    const auto total = (s.class_means.row(y) + term).eval();
    comp.row(y) = (total - s.class_means.row(y)) - term;
    s.class_means.row(y) = total;
    s.class_counts[y]++;
  }
  for (int j = 0; j < c; ++j) {
    if (s.class_counts[j] == 0) throw EmptyClass("class " + std::to_string(j) + " is empty");
    s.global_mean += s.class_means.row(j).transpose();
    s.class_means.row(j) /= static_cast<double>(s.class_counts[j]);
  }
  s.global_mean /= static_cast<double>(n);
  return s;
}

}  // namespace spanrank
