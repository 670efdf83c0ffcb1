#include "spanrank/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>

#include "spanrank/rng.hpp"
#include "spanrank/scatter.hpp"

namespace spanrank {

namespace {

std::uint64_t double_bits(double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  return bits;
}

// Per-filter seed derived from the spec content, not the bank position, so
// evaluating {f} alone matches evaluating it inside a larger bank.
std::uint64_t spec_seed(std::uint64_t master, const FilterSpec& spec) {
  std::uint64_t h = mix_seed(master, static_cast<std::uint64_t>(spec.kind));
  h = mix_seed(h, double_bits(spec.scale));
  h = mix_seed(h, double_bits(spec.orientation));
  h = mix_seed(h, static_cast<std::uint64_t>(spec.tau));
  return mix_seed(h, static_cast<std::uint64_t>(spec.resolution));
}


std::string artifact_name(const std::string& dir, std::size_t index, const char* suffix) {
  char tag[16];
  std::snprintf(tag, sizeof tag, "filter_%03zu", index);
  return dir + "/" + tag + suffix;
}

Eigen::MatrixXd initial_projection_for(const ScatterPair& sp, Eigen::Index d, InitMode mode,
                                       std::uint64_t seed) {
  // The basis init also cannot produce d distinct rows when classes are
  // fewer than channels; fall back to the seeded orthonormal rows then.
  if (mode == InitMode::Basis && d <= sp.num_classes()) return init_projection(sp, d);
  Rng rng(seed);
  return random_orthonormal_init(d, sp.num_classes(), rng);
}

struct SelectionOutcome {
  std::vector<Eigen::Index> kept;
  double threshold = 0.0;
};

SelectionOutcome select_rows(const Eigen::VectorXd& score, double threshold,
                             const PipelineConfig& cfg) {
  SelectionOutcome outcome;
  outcome.threshold = threshold;
  if (cfg.strategy == SelectionStrategy::TopM) {
    outcome.kept = top_m_indices(score, std::max(1, cfg.top_m));
    return outcome;
  }
  for (Eigen::Index i = 0; i < score.size(); ++i)
    if (score[i] >= threshold) outcome.kept.push_back(i);
  if (outcome.kept.empty())
    outcome.kept = top_m_indices(score, std::max(1, cfg.fallback_k));
  return outcome;
}

}  // namespace

void parallel_for_indexed(int threads, std::size_t count,
                          const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& worker : pool) worker.join();
  if (failure) std::rethrow_exception(failure);
}

FilterStage train_filter_stage(const std::vector<LabImage>& images, const std::vector<int>& labels,
                               int num_classes, const FilterSpec& spec, const PipelineConfig& cfg,
                               const std::string& rank_artifact_path) {
  if (images.empty()) throw EmptySplit("train_filter_stage: no training images");
  if (num_classes < 3)
    throw DimensionError("pipeline needs at least 3 classes for one-vs-all ranking");

  const Eigen::MatrixXd kernel = make_kernel(spec);
  const LabeledInstanceSet responses = filter_responses(images, labels, num_classes, kernel);
  const ClassStatistics stats = class_stats(responses);
  const ScatterPair sp = spanned_scatter(stats, responses);

  const Eigen::MatrixXd a0 = initial_projection_for(sp, responses.dimension(), cfg.init_mode,
                                                    spec_seed(cfg.seed, spec));
  const auto [projection, trace] = fista_optimize(a0, sp, cfg.solver);

  FilterStage stage;
  stage.spec = spec;
  stage.projection = projection;
  stage.solver_iterations = trace.iterations_run;
  stage.solver_converged = trace.converged;
  if (!trace.objective_history.empty()) {
    stage.objective_initial = trace.objective_history.front().total;
    stage.objective_final = trace.objective_history.back().total;
  }

  const Eigen::MatrixXd v = project(responses.data, projection);
  const RankingReport report = rank_instances(v, cfg.bins);
  stage.train_threshold = report.threshold;
  stage.train_selection_fraction =
      static_cast<double>(report.mask.count()) / static_cast<double>(report.mask.size());
  if (!rank_artifact_path.empty()) write_ranking_csv(rank_artifact_path, report);
  return stage;
}

EncodedImage encode_image(const LabImage& image, const std::vector<FilterStage>& stages,
                          const PipelineConfig& cfg) {
  if (stages.empty()) throw DimensionError("encode_image: no trained filter stages");
  const Eigen::Index c = stages.front().projection.cols();
  EncodedImage out;
  out.selected.resize(static_cast<Eigen::Index>(stages.size()) * c);
  out.baseline.resize(static_cast<Eigen::Index>(stages.size()) * c);

  double fraction_sum = 0.0;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const FilterStage& stage = stages[k];
    const Eigen::MatrixXd kernel = make_kernel(stage.spec);
    const Eigen::MatrixXd responses = image_responses(image, kernel);
    const Eigen::MatrixXd v = project(responses, stage.projection);

    Eigen::MatrixXd criterion(v.rows(), v.cols());
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      criterion.col(j) = one_vs_all_criterion(v, j);
    const Eigen::VectorXd score = aggregate_scores(criterion);

    const double threshold = cfg.threshold_mode == ThresholdMode::PerImage
                                 ? otsu_threshold(score, cfg.bins)
                                 : stage.train_threshold;
    const SelectionOutcome outcome = select_rows(score, threshold, cfg);

    // Same pooling routine for both descriptors, so disabling selection
    // reproduces the baseline bit for bit.
    const auto pool_rows = [&](const std::vector<Eigen::Index>& rows) {
      Eigen::VectorXd pooled = Eigen::VectorXd::Zero(c);
      for (const Eigen::Index row : rows) pooled += v.row(row).transpose();
      return Eigen::VectorXd(pooled / static_cast<double>(rows.size()));
    };
    std::vector<Eigen::Index> all_rows(static_cast<std::size_t>(v.rows()));
    std::iota(all_rows.begin(), all_rows.end(), Eigen::Index{0});

    out.selected.segment(static_cast<Eigen::Index>(k) * c, c) = pool_rows(outcome.kept);
    out.baseline.segment(static_cast<Eigen::Index>(k) * c, c) = pool_rows(all_rows);
    fraction_sum += static_cast<double>(outcome.kept.size()) / static_cast<double>(v.rows());
  }
  out.selection_fraction = fraction_sum / static_cast<double>(stages.size());
  return out;
}

FilterBank truncated_bank(BankName name, int resolution, int truncate) {
  FilterBank bank = make_bank(name, resolution);
  if (truncate > 0 && truncate < static_cast<int>(bank.filters.size())) {
    std::vector<FilterSpec> kept;
    kept.reserve(static_cast<std::size_t>(truncate));
    for (int k = 0; k < truncate; ++k)
      kept.push_back(bank.filters[static_cast<std::size_t>(
          k * static_cast<int>(bank.filters.size()) / truncate)]);
    bank.filters = std::move(kept);
  }
  return bank;
}

Dataset load_dataset(const std::string& manifest_path) {
  const std::vector<ManifestEntry> entries = read_manifest(manifest_path);
  Dataset dataset;
  int max_label = 0;
  for (const ManifestEntry& entry : entries) {
    if (entry.label < 0) throw IoError(manifest_path + ": negative label");
    max_label = std::max(max_label, entry.label);
    const LabImage lab = rgb_to_lab_normalized(read_netpbm(entry.path));
    if (entry.is_train) {
      dataset.train_images.push_back(lab);
      dataset.train_labels.push_back(entry.label);
    } else {
      dataset.test_images.push_back(lab);
      dataset.test_labels.push_back(entry.label);
    }
  }
  dataset.num_classes = max_label + 1;
  if (dataset.train_images.empty()) throw EmptySplit(manifest_path + ": train split is empty");
  if (dataset.test_images.empty()) throw EmptySplit(manifest_path + ": test split is empty");
  for (const bool train : {true, false}) {
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(dataset.num_classes);
    for (const int label : train ? dataset.train_labels : dataset.test_labels) counts[label]++;
    for (int j = 0; j < dataset.num_classes; ++j)
      if (counts[j] == 0)
        throw EmptyClass(manifest_path + ": class " + std::to_string(j) + " missing from " +
                         (train ? "train" : "test") + " split");
  }
  return dataset;
}

SplitResult evaluate_split(const std::string& manifest_path, const PipelineConfig& cfg,
                           const std::string& artifact_dir) {
  const Dataset dataset = load_dataset(manifest_path);
  FilterBank bank = truncated_bank(cfg.bank, cfg.resolution, cfg.truncate_filters);
  const std::size_t filter_count = bank.filters.size();

  const bool artifacts = !artifact_dir.empty() && cfg.write_artifacts;
  if (artifacts) std::filesystem::create_directories(artifact_dir);

  SplitResult result;

  if (cfg.optimize_filters) {
    std::vector<FilterOptResult> optimized(filter_count);
    parallel_for_indexed(cfg.threads, filter_count, [&](std::size_t k) {
      FilterLossContext ctx;
      ctx.kind = bank.filters[k].kind;
      ctx.resolution = bank.filters[k].resolution;
      ctx.images = dataset.train_images;
      ctx.labels = dataset.train_labels;
      ctx.num_classes = dataset.num_classes;
      ctx.solver = cfg.solver;
      ctx.bins = cfg.bins;
      ctx.seed = spec_seed(cfg.seed, bank.filters[k]);
      ctx.random_init = cfg.init_mode == InitMode::RandomOrthonormal;
      optimized[k] = optimize_filter(bank.filters[k], ctx, cfg.nls);
    });
    double initial_sum = 0.0;
    double final_sum = 0.0;
    std::vector<SpecRecord> records;
    for (std::size_t k = 0; k < filter_count; ++k) {
      bank.filters[k] = optimized[k].spec;
      initial_sum += optimized[k].initial_loss;
      final_sum += optimized[k].final_loss;
      records.push_back(
          {optimized[k].spec, optimized[k].initial_loss, optimized[k].final_loss});
    }
    result.mean_initial_loss = initial_sum / static_cast<double>(filter_count);
    result.mean_final_loss = final_sum / static_cast<double>(filter_count);
    if (artifacts) write_specs_csv(artifact_dir + "/optimized_specs.csv", records);
  }

  std::vector<FilterStage> stages(filter_count);
  parallel_for_indexed(cfg.threads, filter_count, [&](std::size_t k) {
    const std::string rank_path =
        artifacts ? artifact_name(artifact_dir, k, "_rank.csv") : std::string{};
    stages[k] = train_filter_stage(dataset.train_images, dataset.train_labels,
                                   dataset.num_classes, bank.filters[k], cfg, rank_path);
  });
  if (artifacts)
    for (std::size_t k = 0; k < filter_count; ++k)
      write_matrix_csv(artifact_name(artifact_dir, k, "_proj.csv"), stages[k].projection);

  result.train_selection_fractions.resize(filter_count);
  for (std::size_t k = 0; k < filter_count; ++k)
    result.train_selection_fractions[k] = stages[k].train_selection_fraction;

  const auto encode_all = [&](const std::vector<LabImage>& images) {
    std::vector<EncodedImage> encoded(images.size());
    parallel_for_indexed(cfg.threads, images.size(),
                 [&](std::size_t i) { encoded[i] = encode_image(images[i], stages, cfg); });
    return encoded;
  };
  const std::vector<EncodedImage> train_encoded = encode_all(dataset.train_images);
  const std::vector<EncodedImage> test_encoded = encode_all(dataset.test_images);

  const Eigen::Index dim = train_encoded.front().selected.size();
  Eigen::MatrixXd centroid_selected = Eigen::MatrixXd::Zero(dataset.num_classes, dim);
  Eigen::MatrixXd centroid_baseline = Eigen::MatrixXd::Zero(dataset.num_classes, dim);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(dataset.num_classes);
  for (std::size_t i = 0; i < train_encoded.size(); ++i) {
    const int label = dataset.train_labels[i];
    centroid_selected.row(label) += train_encoded[i].selected.transpose();
    centroid_baseline.row(label) += train_encoded[i].baseline.transpose();
    counts[label] += 1.0;
  }
  for (int j = 0; j < dataset.num_classes; ++j) {
    centroid_selected.row(j) /= counts[j];
    centroid_baseline.row(j) /= counts[j];
  }

  const auto classify = [&](const Eigen::MatrixXd& centroids, const Eigen::VectorXd& descriptor) {
    int best = 0;
    double best_dist = (centroids.row(0).transpose() - descriptor).squaredNorm();
    for (int j = 1; j < dataset.num_classes; ++j) {
      const double dist = (centroids.row(j).transpose() - descriptor).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = j;
      }
    }
    return best;
  };
  Eigen::Index correct_selected = 0;
  Eigen::Index correct_baseline = 0;
  for (std::size_t i = 0; i < test_encoded.size(); ++i) {
    if (classify(centroid_selected, test_encoded[i].selected) == dataset.test_labels[i])
      ++correct_selected;
    if (classify(centroid_baseline, test_encoded[i].baseline) == dataset.test_labels[i])
      ++correct_baseline;
  }
  result.accuracy_selected =
      static_cast<double>(correct_selected) / static_cast<double>(test_encoded.size());
  result.accuracy_baseline =
      static_cast<double>(correct_baseline) / static_cast<double>(test_encoded.size());
  return result;
}

EvaluationReport evaluate(const std::vector<std::string>& manifest_paths,
                          const PipelineConfig& cfg, const std::string& report_dir) {
  if (manifest_paths.empty()) throw EmptySplit("evaluate: no manifests given");
  EvaluationReport report;
  report.seed = cfg.seed;
  report.bank = cfg.bank;
  report.optimized = cfg.optimize_filters;
  report.filters_used =
      static_cast<int>(truncated_bank(cfg.bank, cfg.resolution, cfg.truncate_filters)
                           .filters.size());

  for (std::size_t s = 0; s < manifest_paths.size(); ++s) {
    const std::string artifact_dir =
        report_dir.empty() ? std::string{} : report_dir + "/split_" + std::to_string(s);
    report.splits.push_back(evaluate_split(manifest_paths[s], cfg, artifact_dir));
  }

  const auto n = static_cast<double>(report.splits.size());
  double fraction_sum = 0.0;
  for (const SplitResult& split : report.splits) {
    report.mean_selected += split.accuracy_selected / n;
    report.mean_baseline += split.accuracy_baseline / n;
    report.mean_initial_loss += split.mean_initial_loss / n;
    report.mean_final_loss += split.mean_final_loss / n;
    double split_fraction = 0.0;
    for (const double f : split.train_selection_fractions) split_fraction += f;
    fraction_sum += split_fraction / static_cast<double>(split.train_selection_fractions.size());
  }
  report.mean_selection_fraction = fraction_sum / n;
  double var_selected = 0.0;
  double var_baseline = 0.0;
  for (const SplitResult& split : report.splits) {
    var_selected += (split.accuracy_selected - report.mean_selected) *
                    (split.accuracy_selected - report.mean_selected) / n;
    var_baseline += (split.accuracy_baseline - report.mean_baseline) *
                    (split.accuracy_baseline - report.mean_baseline) / n;
  }
  report.stdev_selected = std::sqrt(var_selected);
  report.stdev_baseline = std::sqrt(var_baseline);
  return report;
}

namespace {

std::string gain_tag(double baseline, double ours) {
  if (baseline <= 0.0) return "n/a";
  const double gain = (ours - baseline) / baseline * 100.0;
  return (gain < 0.0 ? std::string("-%") : std::string("+%")) + format_fixed(std::abs(gain), 1);
}

std::string report_header(const EvaluationReport& report) {
  std::string out;
  out += "# seed = " + std::to_string(report.seed) + "\n";
  out += "# bank = " + to_string(report.bank) + "\n";
  out += "# filters = " + std::to_string(report.filters_used) + "\n";
  out += std::string("# optimized = ") + (report.optimized ? "yes" : "no") + "\n";
  return out;
}

}  // namespace

std::string report_to_text(const EvaluationReport& report) {
  std::string out = report_header(report);
  out += "split      baseline        ours       %gain\n";
  for (std::size_t s = 0; s < report.splits.size(); ++s) {
    const SplitResult& split = report.splits[s];
    out += std::to_string(s) + "          " + format_fixed(split.accuracy_baseline, 6) + "    " +
           format_fixed(split.accuracy_selected, 6) + "    " +
           gain_tag(split.accuracy_baseline, split.accuracy_selected) + "\n";
  }
  out += "mean       " + format_fixed(report.mean_baseline, 6) + "    " +
         format_fixed(report.mean_selected, 6) + "    " +
         gain_tag(report.mean_baseline, report.mean_selected) + "\n";
  out += "stdev      " + format_fixed(report.stdev_baseline, 6) + "    " +
         format_fixed(report.stdev_selected, 6) + "\n";
  out += "selection fraction (mean): " + format_fixed(report.mean_selection_fraction, 6) + "\n";
  if (report.optimized)
    out += "filter loss (mean): initial " + format_fixed(report.mean_initial_loss, 6) +
           ", final " + format_fixed(report.mean_final_loss, 6) + "\n";
  return out;
}

std::string report_to_csv(const EvaluationReport& report) {
  std::string out = report_header(report);
  out += "split,baseline,selected,gain_percent,selection_fraction";
  if (report.optimized) out += ",initial_loss,final_loss";
  out += "\n";
  for (std::size_t s = 0; s < report.splits.size(); ++s) {
    const SplitResult& split = report.splits[s];
    double fraction = 0.0;
    for (const double f : split.train_selection_fractions) fraction += f;
    fraction /= static_cast<double>(split.train_selection_fractions.size());
    const double gain = split.accuracy_baseline > 0.0
                            ? (split.accuracy_selected - split.accuracy_baseline) /
                                  split.accuracy_baseline * 100.0
                            : 0.0;
    out += std::to_string(s) + "," + format_fixed(split.accuracy_baseline, 6) + "," +
           format_fixed(split.accuracy_selected, 6) + "," + format_fixed(gain, 6) + "," +
           format_fixed(fraction, 6);
    if (report.optimized)
      out += "," + format_fixed(split.mean_initial_loss, 6) + "," +
             format_fixed(split.mean_final_loss, 6);
    out += "\n";
  }
  const double mean_gain = report.mean_baseline > 0.0
                               ? (report.mean_selected - report.mean_baseline) /
                                     report.mean_baseline * 100.0
                               : 0.0;
  out += "mean," + format_fixed(report.mean_baseline, 6) + "," +
         format_fixed(report.mean_selected, 6) + "," + format_fixed(mean_gain, 6) + "," +
         format_fixed(report.mean_selection_fraction, 6);
  if (report.optimized)
    out += "," + format_fixed(report.mean_initial_loss, 6) + "," +
           format_fixed(report.mean_final_loss, 6);
  out += "\n";
  out += "stdev," + format_fixed(report.stdev_baseline, 6) + "," +
         format_fixed(report.stdev_selected, 6) + ",,";
  if (report.optimized) out += ",,";
  out += "\n";
  return out;
}

}  // namespace spanrank
