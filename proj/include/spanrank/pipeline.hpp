#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "spanrank/filterbank.hpp"
#include "spanrank/filtopt.hpp"
#include "spanrank/image.hpp"
#include "spanrank/io.hpp"
#include "spanrank/projector.hpp"
#include "spanrank/ranksel.hpp"

namespace spanrank {

enum class ThresholdMode {
  PerImage,     // Otsu recomputed from each image's own scores (default)
  PooledTrain,  // threshold from the pooled training scores of the stage
};

enum class SelectionStrategy { Otsu, TopM };

enum class InitMode {
  Basis,             // top-ratio basis rows of the diagonal eigenproblem
  RandomOrthonormal  // seeded orthonormal rows; avoids the exact-zero
                     // columns of the basis init, which the ratio gradient
                     // can never move and which degenerate the ranking
};

struct PipelineConfig {
  BankName bank = BankName::Combined;
  int truncate_filters = 0;  // 0 keeps the whole bank
  int resolution = 49;
  bool optimize_filters = false;
  SolverConfig solver;
  NlsConfig nls;
  int bins = 256;
  std::uint64_t seed = 42;
  int fallback_k = 16;  // pixels kept when a threshold empties the selection
  ThresholdMode threshold_mode = ThresholdMode::PerImage;
  SelectionStrategy strategy = SelectionStrategy::Otsu;
  InitMode init_mode = InitMode::RandomOrthonormal;
  int top_m = 64;
  int threads = 1;  // 0 = hardware concurrency
  bool write_artifacts = true;
};

/// Result of training the projection for one filter on the train split.
struct FilterStage {
  FilterSpec spec;
  Eigen::MatrixXd projection;  // 3 x c
  double train_threshold = 0.0;
  double train_selection_fraction = 1.0;
  int solver_iterations = 0;
  bool solver_converged = false;
  double objective_initial = 0.0;
  double objective_final = 0.0;
};

/// Per-image descriptors with and without ranking-selection, pooled per
/// filter and concatenated in bank order.
struct EncodedImage {
  Eigen::VectorXd selected;  // length |F| * c
  Eigen::VectorXd baseline;  // length |F| * c, mean over all pixels
  double selection_fraction = 1.0;
};

struct SplitResult {
  double accuracy_selected = 0.0;
  double accuracy_baseline = 0.0;
  std::vector<double> train_selection_fractions;  // per filter
  double mean_initial_loss = 0.0;  // filter loss means; valid when optimized
  double mean_final_loss = 0.0;
};

struct EvaluationReport {
  std::uint64_t seed = 42;
  BankName bank = BankName::Combined;
  int filters_used = 0;
  bool optimized = false;
  std::vector<SplitResult> splits;
  double mean_selected = 0.0;
  double stdev_selected = 0.0;
  double mean_baseline = 0.0;
  double stdev_baseline = 0.0;
  double mean_selection_fraction = 0.0;
  double mean_initial_loss = 0.0;
  double mean_final_loss = 0.0;
};

/// Responses -> spanned scatters -> initial projection -> FISTA, then a
/// ranking pass over the training projections to record the pooled threshold
/// and selection fraction. When `rank_artifact_path` is non-empty the
/// training ranking report is written there.
FilterStage train_filter_stage(const std::vector<LabImage>& images, const std::vector<int>& labels,
                               int num_classes, const FilterSpec& spec, const PipelineConfig& cfg,
                               const std::string& rank_artifact_path = "");

/// Per-filter pooled descriptors for one image. Never reads a label.
EncodedImage encode_image(const LabImage& image, const std::vector<FilterStage>& stages,
                          const PipelineConfig& cfg);

/// Loaded dataset split.
struct Dataset {
  std::vector<LabImage> train_images;
  std::vector<int> train_labels;
  std::vector<LabImage> test_images;
  std::vector<int> test_labels;
  int num_classes = 0;
};

Dataset load_dataset(const std::string& manifest_path);

/// Bank limited to `truncate` filters (0 keeps all), taken as an evenly
/// spaced subset so the reduced bank keeps its mix of kinds.
FilterBank truncated_bank(BankName name, int resolution, int truncate);

/// Index-sharded parallel loop (0 threads = hardware concurrency). Work
/// items must be independent; any thread count yields identical results as
/// long as each item writes only its own slot.
void parallel_for_indexed(int threads, std::size_t count,
                          const std::function<void(std::size_t)>& body);

/// Full experiment on one manifest: optional per-filter parameter
/// optimization, per-filter projection training, descriptor encoding and
/// nearest-centroid evaluation with and without ranking-selection.
/// Artifacts (projection and training ranking per filter) are written under
/// `artifact_dir` when it is non-empty and cfg.write_artifacts holds.
SplitResult evaluate_split(const std::string& manifest_path, const PipelineConfig& cfg,
                           const std::string& artifact_dir = "");

/// Aggregates evaluate_split over a list of manifests.
EvaluationReport evaluate(const std::vector<std::string>& manifest_paths,
                          const PipelineConfig& cfg, const std::string& report_dir = "");

std::string report_to_text(const EvaluationReport& report);
std::string report_to_csv(const EvaluationReport& report);

}  // namespace spanrank
