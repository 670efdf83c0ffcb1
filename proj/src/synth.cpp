#include "spanrank/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "spanrank/io.hpp"
#include "spanrank/rng.hpp"

namespace spanrank {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

std::uint8_t quantize(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

// Saturated hue-wheel color for a class; the complement carries the other
// stripe so class identity lives mostly in chroma.
void hue_color(double angle, double out[3]) {
  out[0] = 0.5 + 0.42 * std::cos(angle);
  out[1] = 0.5 + 0.42 * std::cos(angle - 2.0 * kPi / 3.0);
  out[2] = 0.5 + 0.42 * std::cos(angle + 2.0 * kPi / 3.0);
}

}  // namespace

Image8 synthetic_image(const SyntheticConfig& cfg, int class_index, int image_index) {
  const int size = cfg.image_size;
  Image8 image;
  image.width = size;
  image.height = size;
  image.channels = 3;
  image.pixels.resize(static_cast<std::size_t>(size) * size * 3);

  // Each class is a grid of saturated dots on a dimmer complementary
  // background: dot hue, grid pitch and grid offset are class-anchored so
  // pooled descriptors stay tight within a class, and dots respond
  // one-sidedly under symmetric kernels (pooling does not cancel them).
  const double hue = kTwoPi * class_index / cfg.num_classes;
  double dot_color[3];
  double background[3];
  hue_color(hue, dot_color);
  hue_color(hue + kPi, background);
  for (double& ch : background) ch = 0.35 + 0.3 * (ch - 0.5);

  const int pitch = 5 + class_index % 3;
  const int offset_x = (2 * class_index) % pitch;
  const int offset_y = (3 * class_index) % pitch;
  constexpr double dot_radius_sq = 2.25;

  Rng rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(class_index)),
                   static_cast<std::uint64_t>(image_index)));
  const int jitter_x = static_cast<int>(rng.next_below(3)) - 1;
  const int jitter_y = static_cast<int>(rng.next_below(3)) - 1;

  const auto centered_mod = [](int v, int m) {
    int r = v % m;
    if (r < 0) r += m;
    return r > m / 2 ? r - m : r;
  };
  for (int row = 0; row < size; ++row) {
    for (int col = 0; col < size; ++col) {
      const int dx = centered_mod(col - offset_x - jitter_x, pitch);
      const int dy = centered_mod(row - offset_y - jitter_y, pitch);
      const bool dot = dx * dx + dy * dy <= dot_radius_sq;
      const double* base = dot ? dot_color : background;
      const double jitter = rng.uniform(-0.03, 0.03);
      const std::size_t at = (static_cast<std::size_t>(row) * size + col) * 3;
      for (int ch = 0; ch < 3; ++ch) image.pixels[at + static_cast<std::size_t>(ch)] = quantize(base[ch] + jitter);
    }
  }

  // Achromatic uniform noise on a fixed fraction of pixels.
  const auto total = static_cast<std::uint64_t>(size) * static_cast<std::uint64_t>(size);
  const auto noisy = static_cast<std::uint64_t>(
      std::llround(cfg.noise_fraction * static_cast<double>(total)));
  std::vector<std::uint32_t> order(total);
  std::iota(order.begin(), order.end(), 0u);
  for (std::uint64_t i = 0; i < noisy && i + 1 < total; ++i) {
    const std::uint64_t j = i + rng.next_below(total - i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  for (std::uint64_t i = 0; i < noisy; ++i) {
    const std::uint8_t gray = quantize(rng.next_double());
    const std::size_t at = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]) * 3;
    image.pixels[at] = image.pixels[at + 1] = image.pixels[at + 2] = gray;
  }
  return image;
}

std::vector<std::string> generate_synthetic_dataset(const std::string& dir,
                                                    const SyntheticConfig& cfg) {
  if (cfg.num_classes < 1 || cfg.images_per_class < 1 || cfg.image_size < 1 ||
      cfg.num_splits < 1 || cfg.noise_fraction < 0.0 || cfg.noise_fraction > 1.0)
    throw InvalidSpec("synthetic dataset: counts must be positive and noise within [0,1]");
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(cfg.num_classes) * cfg.images_per_class);
  for (int j = 0; j < cfg.num_classes; ++j) {
    for (int i = 0; i < cfg.images_per_class; ++i) {
      char name[48];
      std::snprintf(name, sizeof name, "class_%02d_img_%03d.ppm", j, i);
      write_netpbm((fs::path(dir) / name).string(), synthetic_image(cfg, j, i));
      names.emplace_back(name);
    }
  }

  std::vector<std::string> manifests;
  for (int s = 0; s < cfg.num_splits; ++s) {
    std::vector<ManifestEntry> entries;
    Rng rng(mix_seed(cfg.seed, 0x9000u + static_cast<std::uint64_t>(s)));
    for (int j = 0; j < cfg.num_classes; ++j) {
      std::vector<int> order(static_cast<std::size_t>(cfg.images_per_class));
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const std::uint64_t k = i + rng.next_below(order.size() - i);
        std::swap(order[i], order[static_cast<std::size_t>(k)]);
      }
      const int train_count = cfg.images_per_class / 2;
      for (int i = 0; i < cfg.images_per_class; ++i) {
        ManifestEntry entry;
        entry.path = names[static_cast<std::size_t>(j) * cfg.images_per_class +
                           static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        entry.label = j;
        entry.is_train = i < train_count;
        entries.push_back(entry);
      }
    }
    const std::string manifest_path = (fs::path(dir) / ("split_" + std::to_string(s) + ".csv")).string();
    write_manifest(manifest_path, entries);
    manifests.push_back(manifest_path);
  }
  return manifests;
}

}  // namespace spanrank
