#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "spanrank/errors.hpp"
#include "spanrank/filterbank.hpp"
#include "spanrank/image.hpp"
#include "spanrank/projector.hpp"

namespace spanrank {

/// Traces of the spanned scatters of the projected (and selected) instance
/// set produced by one candidate filter.
struct ScatterTraces {
  double within = 0.0;
  double between = 0.0;
};

/// Continuous filter parameters during optimization; tau is relaxed to a
/// real and rounded back at the end.
struct FilterParams {
  double scale = 1.0;
  double orientation = 0.0;
  double tau = 1.0;
};

struct NlsConfig {
  int max_iterations = 100;
  double step_tolerance = 1e-8;
  double jacobian_step = 1e-4;  // relative forward-difference step
  double scale_low = 0.5;
  double scale_high = 16.0;
  double tau_low = 1.0;
  double tau_high = 4.0;
  bool fix_orientation = false;

  void validate() const {
    if (max_iterations < 0) throw InvalidSpec("nls: max_iterations must be >= 0");
    if (!(step_tolerance > 0.0)) throw InvalidSpec("nls: step_tolerance must be > 0");
    if (!(jacobian_step > 0.0)) throw InvalidSpec("nls: jacobian_step must be > 0");
    if (!(scale_low > 0.0) || !(scale_high > scale_low))
      throw InvalidSpec("nls: scale bounds must satisfy 0 < low < high");
    if (!(tau_high >= tau_low) || !(tau_low >= 1.0))
      throw InvalidSpec("nls: tau bounds must satisfy 1 <= low <= high");
  }
};

/// Frozen context the filter loss is evaluated against: training images and
/// labels plus the projection/ranking configuration of the sub-pipeline.
/// `trace_override`, when set, replaces the sub-pipeline entirely (test
/// seam and synthetic studies).
struct FilterLossContext {
  FilterKind kind = FilterKind::Gaussian;
  int resolution = 49;
  std::vector<LabImage> images;
  std::vector<int> labels;
  int num_classes = 0;
  SolverConfig solver;
  int bins = 256;
  std::uint64_t seed = 42;
  bool use_selection = true;
  bool random_init = true;  // seeded orthonormal start instead of basis rows
  std::function<ScatterTraces(const FilterParams&)> trace_override;
};

/// Runs the projection/ranking sub-pipeline for one candidate filter and
/// returns the spanned scatter traces of the resulting instance set.
ScatterTraces pipeline_traces(const FilterLossContext& ctx, const FilterParams& params);

/// Log-smoothed least-squares residuals of the filter loss:
///   r1 = log tw,  r2 = 1 / log tb,  r3 = 1 - log(tw / tb)
/// with traces floored at 1e-12 before the logs and |log tb| floored at
/// 1e-6 (sign preserved) in r2. The squared norm of the result is the
/// smoothed loss.
inline Eigen::Vector3d residuals_from_traces(ScatterTraces traces) {
  if (!std::isfinite(traces.within) || !std::isfinite(traces.between))
    throw NonFiniteTrace("filter loss: non-finite scatter traces");
  const double tw = std::max(traces.within, 1e-12);
  const double tb = std::max(traces.between, 1e-12);
  const double log_w = std::log(tw);
  const double log_b = std::log(tb);
  double log_b_floored = log_b;
  if (std::abs(log_b_floored) < 1e-6) log_b_floored = log_b_floored < 0.0 ? -1e-6 : 1e-6;
  return {log_w, 1.0 / log_b_floored, 1.0 - (log_w - log_b)};
}

inline ScatterTraces evaluate_traces(const FilterLossContext& ctx, const FilterParams& params) {
  return ctx.trace_override ? ctx.trace_override(params) : pipeline_traces(ctx, params);
}

inline Eigen::Vector3d residuals(const FilterParams& params, const FilterLossContext& ctx) {
  return residuals_from_traces(evaluate_traces(ctx, params));
}

inline Eigen::Vector3d residuals(const FilterSpec& spec, const FilterLossContext& ctx) {
  return residuals(FilterParams{spec.scale, spec.orientation, static_cast<double>(spec.tau)}, ctx);
}

/// Raw Fisher ratio tr(S*_w)/tr(S*_b), the diagnostic companion of the
/// smoothed loss; the denominator is floored at 1e-12.
inline double fisher_filter_loss(const FilterParams& params, const FilterLossContext& ctx) {
  const ScatterTraces t = evaluate_traces(ctx, params);
  if (!std::isfinite(t.within) || !std::isfinite(t.between))
    throw NonFiniteTrace("filter loss: non-finite scatter traces");
  return t.within / std::max(t.between, 1e-12);
}

inline double fisher_filter_loss(const FilterSpec& spec, const FilterLossContext& ctx) {
  return fisher_filter_loss(FilterParams{spec.scale, spec.orientation, static_cast<double>(spec.tau)},
                            ctx);
}

struct NlsHistoryEntry {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  double loss = 0.0;
};

struct NlsResult {
  Eigen::VectorXd params;
  double loss = 0.0;
  std::vector<NlsHistoryEntry> history;  // initial point plus accepted steps
};

/// Box-constrained damped Gauss-Newton (Levenberg-Marquardt with projection
/// onto the box). A step is accepted only if it decreases the squared
/// residual norm by at least step_tolerance * |loss|; the best parameter
/// vector over every evaluation is returned, so the result is never worse
/// than the start.
template <typename ResidualFn>
NlsResult nls_optimize(ResidualFn&& fn, Eigen::VectorXd start, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const NlsConfig& cfg) {
  cfg.validate();
  const Eigen::Index m = start.size();
  if (lower.size() != m || upper.size() != m)
    throw DimensionError("nls_optimize: bound sizes do not match parameters");
  const auto clamp_box = [&](Eigen::VectorXd p) {
    for (Eigen::Index i = 0; i < m; ++i) p[i] = std::clamp(p[i], lower[i], upper[i]);
    return p;
  };

  NlsResult result;
  Eigen::VectorXd best_params;
  double best_loss = std::numeric_limits<double>::infinity();
  const auto evaluate = [&](const Eigen::VectorXd& p) {
    const Eigen::VectorXd r = fn(p);
    const double loss = r.squaredNorm();
    if (std::isfinite(loss) && loss < best_loss) {
      best_loss = loss;
      best_params = p;
    }
    return r;
  };

  Eigen::VectorXd params = clamp_box(std::move(start));
  Eigen::VectorXd res = evaluate(params);
  double loss = res.squaredNorm();
  result.history.push_back({params, res, loss});

  double damping = 1e-3;
  int accepted = 0;
  while (accepted < cfg.max_iterations) {
    Eigen::MatrixXd jac(res.size(), m);
    for (Eigen::Index i = 0; i < m; ++i) {
      double h = cfg.jacobian_step * std::max(1.0, std::abs(params[i]));
      if (params[i] + h > upper[i]) h = -h;
      Eigen::VectorXd probe = params;
      probe[i] += h;
      jac.col(i) = (evaluate(probe) - res) / h;
    }
    const Eigen::MatrixXd normal = jac.transpose() * jac;
    const Eigen::VectorXd rhs = -jac.transpose() * res;

    bool stepped = false;
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(m);
    for (int tries = 0; tries < 25; ++tries) {
      Eigen::MatrixXd damped = normal;
      for (Eigen::Index i = 0; i < m; ++i)
        damped(i, i) += damping * std::max(normal(i, i), 1e-12);
      delta = damped.ldlt().solve(rhs);
      const Eigen::VectorXd candidate = clamp_box(params + delta);
      const Eigen::VectorXd cand_res = evaluate(candidate);
      const double cand_loss = cand_res.squaredNorm();
      if (std::isfinite(cand_loss) && cand_loss < loss - cfg.step_tolerance * std::abs(loss)) {
        params = candidate;
        res = cand_res;
        loss = cand_loss;
        damping = std::max(damping * 0.25, 1e-12);
        result.history.push_back({params, res, loss});
        ++accepted;
        stepped = true;
        break;
      }
      damping *= 4.0;
    }
    if (!stepped) break;
    if (delta.norm() <= 1e-15 * (1.0 + params.norm())) break;
  }

  result.params = best_params;
  result.loss = best_loss;
  return result;
}

struct FilterOptRecord {
  FilterParams params;
  Eigen::Vector3d residuals = Eigen::Vector3d::Zero();
  double loss = 0.0;
};

struct FilterOptResult {
  FilterSpec spec;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<FilterOptRecord> history;
};

/// Optimizes the continuous parameters of one filter (scale, and orientation
/// or tau depending on kind; resolution stays fixed) against the smoothed
/// filter loss. Schmid tau is rounded back to an integer at the end; the
/// returned spec never has a higher loss than the input.
FilterOptResult optimize_filter(const FilterSpec& spec, const FilterLossContext& ctx,
                                const NlsConfig& cfg);

}  // namespace spanrank
