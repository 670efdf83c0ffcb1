#include "spanrank/filtopt.hpp"

#include <vector>

#include "spanrank/ranksel.hpp"
#include "spanrank/rng.hpp"
#include "spanrank/scatter.hpp"

namespace spanrank {

namespace {

double orientation_for(const FilterLossContext& ctx, const FilterParams& params) {
  return is_isotropic(ctx.kind) ? 0.0 : params.orientation;
}

}  // namespace

ScatterTraces pipeline_traces(const FilterLossContext& ctx, const FilterParams& params) {
  if (ctx.images.empty()) throw EmptySplit("filter loss: no training images");
  const Eigen::MatrixXd kernel =
      realize_kernel(ctx.kind, params.scale, orientation_for(ctx, params), params.tau,
                     ctx.resolution);
  const LabeledInstanceSet responses =
      filter_responses(ctx.images, ctx.labels, ctx.num_classes, kernel);
  const ClassStatistics stats = class_stats(responses);
  const ScatterPair sp = spanned_scatter(stats, responses);

  const Eigen::Index d = responses.dimension();
  const Eigen::Index c = responses.num_classes;
  Eigen::MatrixXd a0;
  if (!ctx.random_init && d <= c) {
    a0 = init_projection(sp, d);
  } else {
    Rng rng(mix_seed(ctx.seed, 0x705fu));
    a0 = random_orthonormal_init(d, c, rng);
  }
  const auto [projection, trace] = fista_optimize(a0, sp, ctx.solver);
  (void)trace;
  const Eigen::MatrixXd v = project(responses.data, projection);

  LabeledInstanceSet projected;
  projected.num_classes = responses.num_classes;
  if (ctx.use_selection && c >= 3) {
    const RankingReport report = rank_instances(v, ctx.bins);
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      if (report.mask[i]) kept.push_back(i);
    // Selection may prune a whole class; the loss needs full class coverage,
    // so fall back to the unselected set in that case.
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(ctx.num_classes);
    for (const Eigen::Index i : kept) counts[responses.labels[i]]++;
    if (!kept.empty() && counts.minCoeff() > 0) {
      projected.data.resize(static_cast<Eigen::Index>(kept.size()), v.cols());
      projected.labels.resize(static_cast<Eigen::Index>(kept.size()));
      for (std::size_t r = 0; r < kept.size(); ++r) {
        projected.data.row(static_cast<Eigen::Index>(r)) = v.row(kept[r]);
        projected.labels[static_cast<Eigen::Index>(r)] = responses.labels[kept[r]];
      }
    }
  }
  if (projected.data.rows() == 0) {
    projected.data = v;
    projected.labels = responses.labels;
  }

  const ClassStatistics proj_stats = class_stats(projected);
  const ScatterPair proj_scatter = spanned_scatter(proj_stats, projected);
  ScatterTraces traces;
  traces.within = proj_scatter.sw_spanned.sum();
  traces.between = proj_scatter.sb_spanned.sum();
  if (!std::isfinite(traces.within) || !std::isfinite(traces.between))
    throw NonFiniteTrace("filter loss: sub-pipeline produced non-finite scatters");
  return traces;
}

FilterOptResult optimize_filter(const FilterSpec& spec, const FilterLossContext& ctx,
                                const NlsConfig& cfg) {
  spec.validate();
  cfg.validate();
  constexpr double kPi = 3.14159265358979323846;

  // Free parameters by kind: scale always; orientation for derivative kinds
  // (unless fixed); continuous tau for Schmid. Resolution stays fixed.
  std::vector<int> param_slots;  // 0 = scale, 1 = orientation, 2 = tau
  param_slots.push_back(0);
  if (!is_isotropic(spec.kind) && !cfg.fix_orientation) param_slots.push_back(1);
  if (spec.kind == FilterKind::Schmid) param_slots.push_back(2);

  const Eigen::Index m = static_cast<Eigen::Index>(param_slots.size());
  Eigen::VectorXd start(m), lower(m), upper(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    switch (param_slots[static_cast<std::size_t>(i)]) {
      case 0:
        start[i] = spec.scale;
        lower[i] = cfg.scale_low;
        upper[i] = cfg.scale_high;
        break;
      case 1:
        start[i] = spec.orientation;
        lower[i] = 0.0;
        upper[i] = kPi * (1.0 - 1e-12);
        break;
      default:
        start[i] = static_cast<double>(spec.tau);
        lower[i] = cfg.tau_low;
        upper[i] = cfg.tau_high;
        break;
    }
  }

  const auto to_params = [&](const Eigen::VectorXd& p) {
    FilterParams params{spec.scale, spec.orientation, static_cast<double>(spec.tau)};
    for (Eigen::Index i = 0; i < m; ++i) {
      switch (param_slots[static_cast<std::size_t>(i)]) {
        case 0: params.scale = p[i]; break;
        case 1: params.orientation = p[i]; break;
        default: params.tau = p[i]; break;
      }
    }
    return params;
  };

  const auto residual_fn = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    return residuals(to_params(p), ctx);
  };

  const NlsResult nls = nls_optimize(residual_fn, start, lower, upper, cfg);

  FilterOptResult out;
  out.initial_loss = nls.history.front().loss;
  for (const NlsHistoryEntry& entry : nls.history) {
    FilterOptRecord record;
    record.params = to_params(entry.params);
    record.residuals = entry.residuals;
    record.loss = entry.loss;
    out.history.push_back(record);
  }

  FilterSpec optimized = spec;
  const FilterParams best = to_params(nls.params);
  optimized.scale = best.scale;
  if (!is_isotropic(spec.kind)) optimized.orientation = best.orientation;
  if (spec.kind == FilterKind::Schmid) {
    const double rounded = std::round(best.tau);
    optimized.tau = static_cast<int>(std::clamp(rounded, cfg.tau_low, cfg.tau_high));
  }

  // Rounding tau can change the loss, so re-check the integer-valued spec and
  // keep the input when it is not an improvement.
  out.final_loss = residuals(optimized, ctx).squaredNorm();
  if (!(out.final_loss <= out.initial_loss)) {
    optimized = spec;
    out.final_loss = out.initial_loss;
  }
  out.spec = optimized;
  return out;
}

}  // namespace spanrank
