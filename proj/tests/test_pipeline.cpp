#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <limits>

#include "helpers.hpp"
#include "spanrank/pipeline.hpp"
#include "spanrank/synth.hpp"

using namespace spanrank;

namespace {

SyntheticConfig tiny_synth(double noise = 0.2) {
  SyntheticConfig cfg;
  cfg.num_classes = 3;
  cfg.images_per_class = 6;
  cfg.image_size = 16;
  cfg.noise_fraction = noise;
  cfg.num_splits = 1;
  cfg.seed = 99;
  return cfg;
}

PipelineConfig tiny_pipeline() {
  PipelineConfig cfg;
  cfg.bank = BankName::LM;
  cfg.truncate_filters = 2;
  cfg.resolution = 7;
  cfg.bins = 64;
  cfg.solver.max_iterations = 150;
  cfg.write_artifacts = false;
  return cfg;
}

struct TinyData {
  std::vector<LabImage> images;
  std::vector<int> labels;
};

TinyData tiny_train_set(const SyntheticConfig& synth, int per_class) {
  TinyData data;
  for (int j = 0; j < synth.num_classes; ++j)
    for (int i = 0; i < per_class; ++i) {
      data.images.push_back(rgb_to_lab_normalized(synthetic_image(synth, j, i)));
      data.labels.push_back(j);
    }
  return data;
}

}  // namespace

TEST_CASE("training a filter stage reduces the objective") {
  const auto data = tiny_train_set(tiny_synth(), 4);
  const PipelineConfig cfg = tiny_pipeline();
  FilterSpec spec = make_bank(BankName::LM, cfg.resolution).filters.front();
  const FilterStage stage = train_filter_stage(data.images, data.labels, 3, spec, cfg);
  CHECK(stage.objective_final <= stage.objective_initial);
  CHECK(stage.projection.rows() == 3);
  CHECK(stage.projection.cols() == 3);
  CHECK(stage.train_selection_fraction > 0.0);
  CHECK(stage.train_selection_fraction <= 1.0);
}

TEST_CASE("a single training image per class is enough") {
  const auto data = tiny_train_set(tiny_synth(), 1);
  const PipelineConfig cfg = tiny_pipeline();
  FilterSpec spec = make_bank(BankName::LM, cfg.resolution).filters.front();
  const FilterStage stage = train_filter_stage(data.images, data.labels, 3, spec, cfg);
  CHECK(stage.projection.allFinite());
}

TEST_CASE("a class missing from training data raises EmptyClass") {
  auto data = tiny_train_set(tiny_synth(), 2);
  const PipelineConfig cfg = tiny_pipeline();
  // Claim four classes while the data only covers three.
  FilterSpec spec = make_bank(BankName::LM, cfg.resolution).filters.front();
  CHECK_THROWS_AS(train_filter_stage(data.images, data.labels, 4, spec, cfg), EmptyClass);
}

TEST_CASE("identical images encode to identical descriptors") {
  const auto data = tiny_train_set(tiny_synth(), 4);
  const PipelineConfig cfg = tiny_pipeline();
  const FilterBank bank = make_bank(cfg.bank, cfg.resolution);
  std::vector<FilterStage> stages;
  for (int k = 0; k < 2; ++k)
    stages.push_back(train_filter_stage(data.images, data.labels, 3, bank.filters[static_cast<std::size_t>(k)], cfg));

  const EncodedImage a = encode_image(data.images[0], stages, cfg);
  const EncodedImage b = encode_image(data.images[0], stages, cfg);
  CHECK((a.selected - b.selected).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.baseline - b.baseline).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("per-filter encodings are independent of the bank around them") {
  const auto data = tiny_train_set(tiny_synth(), 4);
  const PipelineConfig cfg = tiny_pipeline();
  const FilterBank bank = make_bank(cfg.bank, cfg.resolution);
  const FilterStage s0 =
      train_filter_stage(data.images, data.labels, 3, bank.filters[0], cfg);
  const FilterStage s1 =
      train_filter_stage(data.images, data.labels, 3, bank.filters[1], cfg);

  const EncodedImage solo0 = encode_image(data.images[2], {s0}, cfg);
  const EncodedImage solo1 = encode_image(data.images[2], {s1}, cfg);
  const EncodedImage both = encode_image(data.images[2], {s0, s1}, cfg);

  CHECK((both.selected.head(3) - solo0.selected).cwiseAbs().maxCoeff() == 0.0);
  CHECK((both.selected.tail(3) - solo1.selected).cwiseAbs().maxCoeff() == 0.0);
  CHECK((both.baseline.head(3) - solo0.baseline).cwiseAbs().maxCoeff() == 0.0);
  CHECK((both.baseline.tail(3) - solo1.baseline).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forcing the threshold below every score reproduces the baseline") {
  const auto data = tiny_train_set(tiny_synth(), 4);
  PipelineConfig cfg = tiny_pipeline();
  const FilterBank bank = make_bank(cfg.bank, cfg.resolution);
  FilterStage stage = train_filter_stage(data.images, data.labels, 3, bank.filters[0], cfg);

  cfg.threshold_mode = ThresholdMode::PooledTrain;
  stage.train_threshold = -std::numeric_limits<double>::infinity();
  const EncodedImage encoded = encode_image(data.images[1], {stage}, cfg);
  CHECK((encoded.selected - encoded.baseline).cwiseAbs().maxCoeff() == 0.0);
  CHECK(encoded.selection_fraction == 1.0);
}

TEST_CASE("a constant image encodes to an all-zero descriptor") {
  const auto data = tiny_train_set(tiny_synth(), 4);
  PipelineConfig cfg = tiny_pipeline();
  const FilterBank bank = make_bank(cfg.bank, cfg.resolution);
  // bank.filters[0] is a first-derivative kernel, hence zero-sum.
  const FilterStage stage =
      train_filter_stage(data.images, data.labels, 3, bank.filters[0], cfg);

  Image8 flat;
  flat.width = flat.height = 16;
  flat.channels = 3;
  flat.pixels.assign(16 * 16 * 3, 77);
  const EncodedImage encoded = encode_image(rgb_to_lab_normalized(flat), {stage}, cfg);
  CHECK(encoded.selected.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(encoded.baseline.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("a unique selection survivor becomes the descriptor verbatim") {
  const auto data = tiny_train_set(tiny_synth(), 4);
  PipelineConfig cfg = tiny_pipeline();
  const FilterBank bank = make_bank(cfg.bank, cfg.resolution);
  FilterStage stage = train_filter_stage(data.images, data.labels, 3, bank.filters[0], cfg);

  // Recompute the image's scores and aim the pooled threshold between the
  // best and second-best pixel, so exactly one row survives.
  const LabImage& image = data.images[0];
  const Eigen::MatrixXd v =
      project(image_responses(image, make_kernel(stage.spec)), stage.projection);
  Eigen::MatrixXd criterion(v.rows(), v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) criterion.col(j) = one_vs_all_criterion(v, j);
  Eigen::VectorXd score = aggregate_scores(criterion);
  Eigen::Index best = 0;
  score.maxCoeff(&best);
  double second = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < score.size(); ++i)
    if (i != best) second = std::max(second, score[i]);
  REQUIRE(score[best] > second);

  cfg.threshold_mode = ThresholdMode::PooledTrain;
  stage.train_threshold = 0.5 * (score[best] + second);
  const EncodedImage encoded = encode_image(image, {stage}, cfg);
  CHECK((encoded.selected - v.row(best).transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(encoded.selection_fraction == doctest::Approx(1.0 / static_cast<double>(v.rows())));
}

TEST_CASE("pooled-train thresholds can empty a selection and fall back") {
  const auto data = tiny_train_set(tiny_synth(), 4);
  PipelineConfig cfg = tiny_pipeline();
  cfg.fallback_k = 5;
  const FilterBank bank = make_bank(cfg.bank, cfg.resolution);
  FilterStage stage = train_filter_stage(data.images, data.labels, 3, bank.filters[0], cfg);

  cfg.threshold_mode = ThresholdMode::PooledTrain;
  stage.train_threshold = std::numeric_limits<double>::infinity();
  const EncodedImage encoded = encode_image(data.images[1], {stage}, cfg);
  CHECK(encoded.selection_fraction == doctest::Approx(5.0 / 256.0));
  CHECK(encoded.selected.allFinite());
}

TEST_CASE("full evaluation on a clean separable dataset is perfect") {
  // Three classes of bit-identical blob images: a colored square at a
  // class-specific position. Train and test descriptors coincide, so the
  // nearest-centroid accuracy must be exact with and without selection.
  testutil::TempDir dir("pipe_clean");
  std::vector<ManifestEntry> entries;
  for (int j = 0; j < 3; ++j) {
    Image8 image;
    image.width = image.height = 16;
    image.channels = 3;
    image.pixels.assign(16 * 16 * 3, 120);
    const int corner = 2 + 4 * j;
    for (int r = corner; r < corner + 4; ++r)
      for (int c = corner; c < corner + 4; ++c) {
        const std::size_t at = static_cast<std::size_t>(r * 16 + c) * 3;
        image.pixels[at] = j == 0 ? 255 : 0;
        image.pixels[at + 1] = j == 1 ? 255 : 0;
        image.pixels[at + 2] = j == 2 ? 255 : 0;
      }
    const std::string name = "blob_" + std::to_string(j) + ".ppm";
    write_netpbm(dir.file(name), image);
    for (int copy = 0; copy < 2; ++copy)
      entries.push_back({name, j, copy == 0});
  }
  write_manifest(dir.file("split.csv"), entries);

  const EvaluationReport report = evaluate({dir.file("split.csv")}, tiny_pipeline());
  CHECK(report.mean_selected == doctest::Approx(1.0));
  CHECK(report.mean_baseline == doctest::Approx(1.0));
}

TEST_CASE("evaluation report fields are well-formed on a noisy dataset") {
  testutil::TempDir dir("pipe_noisy");
  const auto manifests = generate_synthetic_dataset(dir.path().string(), tiny_synth(0.3));
  PipelineConfig cfg = tiny_pipeline();
  const EvaluationReport report = evaluate(manifests, cfg);
  REQUIRE(report.splits.size() == 1);
  CHECK(report.mean_selected >= 0.0);
  CHECK(report.mean_selected <= 1.0);
  CHECK(report.mean_baseline >= 0.0);
  CHECK(report.mean_baseline <= 1.0);
  CHECK(report.mean_selection_fraction > 0.0);
  CHECK(report.mean_selection_fraction <= 1.0);
  CHECK(report.filters_used == 2);

  const std::string text = report_to_text(report);
  CHECK(text.find("# seed = 42") != std::string::npos);
  CHECK(text.find("%gain") != std::string::npos);
  const std::string csv = report_to_csv(report);
  CHECK(csv.find("split,baseline,selected,gain_percent,selection_fraction") != std::string::npos);
}

TEST_CASE("parallel and serial evaluation produce identical reports") {
  testutil::TempDir dir("pipe_par");
  const auto manifests = generate_synthetic_dataset(dir.path().string(), tiny_synth(0.25));
  PipelineConfig serial = tiny_pipeline();
  serial.threads = 1;
  PipelineConfig parallel = tiny_pipeline();
  parallel.threads = 2;
  const std::string a = report_to_csv(evaluate(manifests, serial));
  const std::string b = report_to_csv(evaluate(manifests, parallel));
  CHECK(a == b);
}

TEST_CASE("artifacts are written with deterministic names") {
  testutil::TempDir dir("pipe_art");
  const auto manifests = generate_synthetic_dataset(dir.file("data"), tiny_synth(0.2));
  PipelineConfig cfg = tiny_pipeline();
  cfg.write_artifacts = true;
  evaluate(manifests, cfg, dir.file("report"));
  CHECK(std::filesystem::exists(dir.file("report") + "/split_0/filter_000_proj.csv"));
  CHECK(std::filesystem::exists(dir.file("report") + "/split_0/filter_000_rank.csv"));
  CHECK(std::filesystem::exists(dir.file("report") + "/split_0/filter_001_proj.csv"));
  const Eigen::MatrixXd proj = read_matrix_csv(dir.file("report") + "/split_0/filter_000_proj.csv");
  CHECK(proj.rows() == 3);
  CHECK(proj.cols() == 3);
}

TEST_CASE("an empty test split is rejected") {
  testutil::TempDir dir("pipe_empty");
  const auto manifests = generate_synthetic_dataset(dir.path().string(), tiny_synth(0.2));
  // Rewrite the manifest with every row marked train.
  const auto entries = read_manifest(manifests[0]);
  std::vector<ManifestEntry> all_train;
  for (ManifestEntry entry : entries) {
    entry.path = std::filesystem::path(entry.path).filename().string();
    entry.is_train = true;
    all_train.push_back(entry);
  }
  write_manifest(manifests[0], all_train);
  CHECK_THROWS_AS(evaluate(manifests, tiny_pipeline()), EmptySplit);
}

TEST_CASE("fewer than three classes cannot be ranked") {
  SyntheticConfig synth = tiny_synth();
  synth.num_classes = 2;
  const auto data = tiny_train_set(synth, 3);
  const PipelineConfig cfg = tiny_pipeline();
  FilterSpec spec = make_bank(BankName::LM, cfg.resolution).filters.front();
  CHECK_THROWS_AS(train_filter_stage(data.images, data.labels, 2, spec, cfg), DimensionError);
}
