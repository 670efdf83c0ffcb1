#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spanrank/errors.hpp"
#include "spanrank/instance_set.hpp"
#include "spanrank/rng.hpp"

namespace spanrank {

/// Within/between scatter in both formulations: the classical d x d outer
/// product form and the class-spanned diagonal c x c form whose trace matches
/// the classical one by construction.
struct ScatterPair {
  Eigen::MatrixXd sw_classic;  // d x d, symmetric PSD
  Eigen::MatrixXd sb_classic;  // d x d, symmetric PSD
  Eigen::VectorXd sw_spanned;  // diagonal of the c x c spanned within-scatter
  Eigen::VectorXd sb_spanned;  // diagonal of the c x c spanned between-scatter

  Eigen::Index dimension() const { return sw_classic.rows(); }
  Eigen::Index num_classes() const { return sw_spanned.size(); }
};

/// Intertwining map between the two scatter formulations and the Frobenius
/// residual of the homogeneous Sylvester system it solves.
struct SimilarityMap {
  Eigen::MatrixXd gamma;  // c x d, unit Frobenius norm
  double residual = 0.0;  // ||gamma * S_classic - S_spanned * gamma||_F
};

namespace detail {

// Kahan-compensated matrix accumulator.
class CompensatedMatrixSum {
 public:
  CompensatedMatrixSum(Eigen::Index rows, Eigen::Index cols)
      : sum_(Eigen::MatrixXd::Zero(rows, cols)), comp_(Eigen::MatrixXd::Zero(rows, cols)) {}

  void add(const Eigen::MatrixXd& term) {
    const Eigen::MatrixXd y = term - comp_;
    const Eigen::MatrixXd t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }

  const Eigen::MatrixXd& value() const { return sum_; }

 private:
  Eigen::MatrixXd sum_;
  Eigen::MatrixXd comp_;
};

class CompensatedSum {
 public:
  void add(double term) {
    const double y = term - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

/// Classical within/between scatter matrices:
///   S_w = sum_j sum_{x in C_j} (x - mu_j)(x - mu_j)^T
///   S_b = sum_j (mu_j - mu_bar)(mu_j - mu_bar)^T
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> classical_scatter(const ClassStatistics& stats,
                                                                     const LabeledInstanceSet& x) {
  const Eigen::Index d = x.dimension();
  const int c = x.num_classes;
  detail::CompensatedMatrixSum sw(d, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Eigen::VectorXd centered =
        x.data.row(i).transpose() - stats.class_means.row(x.labels[i]).transpose();
    sw.add(centered * centered.transpose());
  }
  Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < c; ++j) {
    const Eigen::VectorXd delta = stats.class_means.row(j).transpose() - stats.global_mean;
    sb.noalias() += delta * delta.transpose();
  }
  return {sw.value(), sb};
}

/// Both scatter formulations. The spanned diagonals are
///   S_w(j,j) = sum_{x in C_j} ||x - mu_j||^2
///   S_b(j,j) = ||mu_j - mu_bar||^2
/// so trace(classic) == trace(spanned) holds by construction for both pairs.
inline ScatterPair spanned_scatter(const ClassStatistics& stats, const LabeledInstanceSet& x) {
  ScatterPair sp;
  std::tie(sp.sw_classic, sp.sb_classic) = classical_scatter(stats, x);

  const int c = x.num_classes;
  std::vector<detail::CompensatedSum> within(static_cast<std::size_t>(c));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const int y = x.labels[i];
    within[static_cast<std::size_t>(y)].add(
        (x.data.row(i) - stats.class_means.row(y)).squaredNorm());
  }
  sp.sw_spanned.resize(c);
  sp.sb_spanned.resize(c);
  for (int j = 0; j < c; ++j) {
    sp.sw_spanned[j] = within[static_cast<std::size_t>(j)].value();
    sp.sb_spanned[j] = (stats.class_means.row(j).transpose() - stats.global_mean).squaredNorm();
  }
  return sp;
}

/// Classical trace-of-quotient Fisher criterion tr((A^T Sw A)(A^T Sb A)^-1).
/// Throws SingularDenominator when A^T Sb A is numerically singular
/// (condition number above 1e12).
template <typename DerivedA, typename DerivedW, typename DerivedB>
double classical_fisher(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedW>& sw,
                        const Eigen::MatrixBase<DerivedB>& sb) {
  if (sw.rows() != sw.cols() || sb.rows() != sb.cols() || sw.rows() != sb.rows() ||
      a.rows() != sw.rows())
    throw DimensionError("classical_fisher: nonconformable shapes");
  const Eigen::MatrixXd num = a.transpose() * sw * a;
  const Eigen::MatrixXd den = a.transpose() * sb * a;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(den);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  const double smin = sv.size() > 0 ? sv[sv.size() - 1] : 0.0;
  if (!(smin > 0.0) || smax / smin > 1e12)
    throw SingularDenominator("classical_fisher: A^T Sb A is numerically singular");
  return den.partialPivLu().solve(num).trace();
}

/// Minimal-residual unit-Frobenius solution of the homogeneous Sylvester
/// system Gamma * S_classic - S_spanned * Gamma = 0, via the vectorized
/// operator (S_classic^T (x) I_c - I_d (x) S_spanned) and its smallest
/// singular pair. The residual is zero exactly when the two matrices share
/// an eigenvalue.
inline SimilarityMap sylvester_similarity(const Eigen::MatrixXd& s_classic,
                                          const Eigen::MatrixXd& s_spanned) {
  if (s_classic.rows() != s_classic.cols() || s_spanned.rows() != s_spanned.cols())
    throw DimensionError("sylvester_similarity: inputs must be square");
  if (!s_classic.allFinite() || !s_spanned.allFinite())
    throw Error("sylvester_similarity: non-finite input");
  const Eigen::Index d = s_classic.rows();
  const Eigen::Index c = s_spanned.rows();

  // Column-major vec of the c x d unknown: entry (i,j) sits at index j*c + i.
  Eigen::MatrixXd op = Eigen::MatrixXd::Zero(c * d, c * d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < c; ++i) {
      const Eigen::Index row = j * c + i;
      for (Eigen::Index k = 0; k < d; ++k) op(row, k * c + i) += s_classic(k, j);
      for (Eigen::Index m = 0; m < c; ++m) op(row, j * c + m) -= s_spanned(i, m);
    }
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(op, Eigen::ComputeFullV);
  Eigen::VectorXd vec = svd.matrixV().col(c * d - 1);

  // Deterministic sign: the largest-magnitude entry is made positive.
  Eigen::Index imax = 0;
  vec.cwiseAbs().maxCoeff(&imax);
  if (vec[imax] < 0.0) vec = -vec;
  vec /= vec.norm();

  SimilarityMap map;
  map.gamma = Eigen::Map<const Eigen::MatrixXd>(vec.data(), c, d);
  map.residual = (map.gamma * s_classic - s_spanned * map.gamma).norm();
  return map;
}

/// Initial projection from the diagonal generalized eigenproblem on the
/// spanned scatters: rows of the d x c result are the standard basis vectors
/// of the d classes with the largest between/within ratio, ties resolved by
/// ascending class index. The within diagonal is ridge-stabilized before the
/// ratio is formed.
inline Eigen::MatrixXd init_projection(const ScatterPair& sp, Eigen::Index d) {
  const Eigen::Index c = sp.num_classes();
  if (d > c)
    throw DimensionError("init_projection: cannot form " + std::to_string(d) +
                         " distinct basis rows from " + std::to_string(c) + " classes");
  if (d < 1) throw DimensionError("init_projection: output dimension must be >= 1");

  const double ridge = 1e-8 * sp.sw_spanned.sum() / static_cast<double>(c);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(c));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::VectorXd ratio(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    const double den = sp.sw_spanned[j] + ridge;
    if (den > 0.0)
      ratio[j] = sp.sb_spanned[j] / den;
    else
      ratio[j] = sp.sb_spanned[j] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return ratio[a] > ratio[b]; });

  Eigen::MatrixXd a0 = Eigen::MatrixXd::Zero(d, c);
  for (Eigen::Index k = 0; k < d; ++k) a0(k, order[static_cast<std::size_t>(k)]) = 1.0;
  return a0;
}

/// Seeded alternative initializer: a d x c matrix with orthonormal rows when
/// d <= c, otherwise orthonormal columns (the best a tall matrix can do).
inline Eigen::MatrixXd random_orthonormal_init(Eigen::Index d, Eigen::Index c, Rng& rng) {
  if (d < 1 || c < 1) throw DimensionError("random_orthonormal_init: dimensions must be >= 1");
  const Eigen::Index tall = std::max(d, c);
  const Eigen::Index thin = std::min(d, c);
  Eigen::MatrixXd g(tall, thin);
  for (Eigen::Index i = 0; i < tall; ++i)
    for (Eigen::Index j = 0; j < thin; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, thin);
  return d <= c ? Eigen::MatrixXd(q.transpose()) : q;
}

/// Both sides of the similarity trace identity tr(Sw_classic Sb_classic^-1)
/// vs tr(Sw_spanned Sb_spanned^-1), evaluated with pseudo-inverses. Reported
/// as a diagnostic; equality is not guaranteed for d != c.
inline std::pair<double, double> fisher_trace_diagnostic(const ScatterPair& sp) {
  const Eigen::MatrixXd pinv = sp.sb_classic.completeOrthogonalDecomposition().pseudoInverse();
  const double classic = (sp.sw_classic * pinv).trace();
  const double tol = 1e-12 * sp.sb_spanned.cwiseAbs().maxCoeff();
  double spanned = 0.0;
  for (Eigen::Index j = 0; j < sp.num_classes(); ++j)
    if (std::abs(sp.sb_spanned[j]) > tol) spanned += sp.sw_spanned[j] / sp.sb_spanned[j];
  return {classic, spanned};
}

}  // namespace spanrank
