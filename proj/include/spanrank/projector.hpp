#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "spanrank/errors.hpp"
#include "spanrank/scatter.hpp"

namespace spanrank {

/// One evaluation of the regularized quotient-of-trace objective:
/// total = ratio + weight * orthogonality.
struct ObjectiveValue {
  double total = 0.0;          // H
  double ratio = 0.0;          // tr(A Sw A^T) / tr(A Sb A^T)
  double orthogonality = 0.0;  // ||I - A A^T||_F
};

struct SolverConfig {
  int max_iterations = 1000;
  double relative_tolerance = 1e-8;
  double initial_step = 1.0;
  double backtrack_factor = 0.5;
  double orthogonality_weight = 1.0;

  void validate() const {
    if (max_iterations < 0) throw InvalidSpec("solver: max_iterations must be >= 0");
    if (!(relative_tolerance > 0.0)) throw InvalidSpec("solver: relative_tolerance must be > 0");
    if (!(initial_step > 0.0)) throw InvalidSpec("solver: initial_step must be > 0");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
      throw InvalidSpec("solver: backtrack_factor must be in (0,1)");
    if (orthogonality_weight < 0.0)
      throw InvalidSpec("solver: orthogonality_weight must be >= 0");
  }
};

/// Accepted-iterate record of one solver run. The first entry is the
/// objective at the initial point.
struct SolverTrace {
  std::vector<ObjectiveValue> objective_history;
  int iterations_run = 0;
  bool converged = false;
};

namespace detail {

inline void check_projection_shapes(const Eigen::MatrixXd& a, const ScatterPair& sp) {
  if (a.cols() != sp.num_classes())
    throw DimensionError("projection has " + std::to_string(a.cols()) +
                         " columns but scatter spans " + std::to_string(sp.num_classes()) +
                         " classes");
  if (a.rows() < 1) throw DimensionError("projection must have at least one row");
}

}  // namespace detail

/// Objective split H = H1 + weight * H2 with H1 the within/between trace
/// ratio over the spanned scatters and H2 the Frobenius distance of A A^T
/// from the identity. Throws DegenerateDenominator when tr(A Sb A^T)
/// vanishes.
inline ObjectiveValue objective(const Eigen::MatrixXd& a, const ScatterPair& sp,
                                double weight = 1.0) {
  detail::check_projection_shapes(a, sp);
  const double u = (a * sp.sw_spanned.asDiagonal()).cwiseProduct(a).sum();
  const double v = (a * sp.sb_spanned.asDiagonal()).cwiseProduct(a).sum();
  if (v < 1e-300) throw DegenerateDenominator("objective: tr(A Sb A^T) vanished");
  ObjectiveValue out;
  out.ratio = u / v;
  const Eigen::Index d = a.rows();
  out.orthogonality = (Eigen::MatrixXd::Identity(d, d) - a * a.transpose()).norm();
  out.total = out.ratio + weight * out.orthogonality;
  return out;
}

/// Analytic gradient of the objective in the layout of A (d x c). The
/// orthogonality term uses the zero subgradient at its nonsmooth point
/// (residual below 1e-12).
inline Eigen::MatrixXd gradient(const Eigen::MatrixXd& a, const ScatterPair& sp,
                                double weight = 1.0) {
  detail::check_projection_shapes(a, sp);
  const double u = (a * sp.sw_spanned.asDiagonal()).cwiseProduct(a).sum();
  const double v = (a * sp.sb_spanned.asDiagonal()).cwiseProduct(a).sum();
  if (v < 1e-300) throw DegenerateDenominator("gradient: tr(A Sb A^T) vanished");

  // Spanned scatters are symmetric, so A (S + S^T) = 2 A S.
  const Eigen::MatrixXd grad_u = 2.0 * a * sp.sw_spanned.asDiagonal();
  const Eigen::MatrixXd grad_v = 2.0 * a * sp.sb_spanned.asDiagonal();
  Eigen::MatrixXd grad = (grad_u * v - grad_v * u) / (v * v);

  const Eigen::Index d = a.rows();
  const Eigen::MatrixXd residual = Eigen::MatrixXd::Identity(d, d) - a * a.transpose();
  const double rnorm = residual.norm();
  if (rnorm >= 1e-12) grad.noalias() += weight * (-2.0 / rnorm) * (residual * a);
  return grad;
}

/// Monotone FISTA on the smooth objective: backtracking line search with a
/// sufficient-decrease test, Nesterov momentum, and a restart that discards
/// the extrapolated point whenever it increases the objective. Accepted
/// iterates are non-increasing in H. Returns the final projection and the
/// per-iterate trace.
inline std::pair<Eigen::MatrixXd, SolverTrace> fista_optimize(const Eigen::MatrixXd& a0,
                                                              const ScatterPair& sp,
                                                              const SolverConfig& cfg = {}) {
  cfg.validate();
  detail::check_projection_shapes(a0, sp);

  const auto eval = [&](const Eigen::MatrixXd& a) -> std::optional<ObjectiveValue> {
    try {
      const ObjectiveValue value = objective(a, sp, cfg.orthogonality_weight);
      if (!std::isfinite(value.total)) return std::nullopt;
      return value;
    } catch (const DegenerateDenominator&) {
      return std::nullopt;
    }
  };

  SolverTrace trace;
  const std::optional<ObjectiveValue> start = eval(a0);
  if (!start) return {a0, trace};
  trace.objective_history.push_back(*start);

  Eigen::MatrixXd current = a0;
  ObjectiveValue current_value = *start;
  Eigen::MatrixXd extrapolated = a0;
  std::optional<ObjectiveValue> extrapolated_value = start;
  double momentum = 1.0;
  constexpr int kMaxBacktracks = 60;

  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    trace.iterations_run = iter;
    if (!extrapolated_value || extrapolated_value->total > current_value.total) {
      extrapolated = current;
      extrapolated_value = current_value;
      momentum = 1.0;
    }

    const Eigen::MatrixXd grad = gradient(extrapolated, sp, cfg.orthogonality_weight);
    const double grad_norm2 = grad.squaredNorm();

    double step = cfg.initial_step;
    Eigen::MatrixXd candidate;
    std::optional<ObjectiveValue> candidate_value;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      candidate = extrapolated - step * grad;
      candidate_value = eval(candidate);
      if (candidate_value &&
          candidate_value->total <= extrapolated_value->total - 1e-4 * step * grad_norm2) {
        accepted = true;
        break;
      }
      step *= cfg.backtrack_factor;
    }
    if (!accepted) {
      // No descent direction survives the line search: treat as converged.
      trace.converged = true;
      break;
    }
    if (!std::isfinite(candidate_value->total)) {
      trace.converged = false;
      break;
    }

    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    extrapolated = candidate + ((momentum - 1.0) / next_momentum) * (candidate - current);
    extrapolated_value = eval(extrapolated);
    momentum = next_momentum;

    const double change = std::abs(current_value.total - candidate_value->total);
    current = candidate;
    current_value = *candidate_value;
    trace.objective_history.push_back(current_value);

    if (change < cfg.relative_tolerance * std::max(1.0, std::abs(current_value.total))) {
      trace.converged = true;
      break;
    }
  }
  return {current, trace};
}

/// Projects instances into class space: returns R * A (N x c).
template <typename DerivedR, typename DerivedA>
Eigen::Matrix<typename DerivedR::Scalar, Eigen::Dynamic, Eigen::Dynamic> project(
    const Eigen::MatrixBase<DerivedR>& r, const Eigen::MatrixBase<DerivedA>& a) {
  if (r.cols() != a.rows())
    throw DimensionError("project: instance dimension " + std::to_string(r.cols()) +
                         " does not match projection rows " + std::to_string(a.rows()));
  return r * a;
}

}  // namespace spanrank
