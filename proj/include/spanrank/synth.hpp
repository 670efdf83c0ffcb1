#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spanrank/image.hpp"

namespace spanrank {

/// Parameters of the bundled synthetic texture dataset: per class a striped
/// two-color pattern (distinct hue pair, orientation and frequency), with a
/// fraction of pixels replaced by achromatic uniform noise.
struct SyntheticConfig {
  int num_classes = 10;
  int images_per_class = 40;
  int image_size = 32;
  double noise_fraction = 0.3;
  int num_splits = 4;
  std::uint64_t seed = 42;
};

/// One synthetic image, deterministic in (seed, class, index).
Image8 synthetic_image(const SyntheticConfig& cfg, int class_index, int image_index);

/// Writes all images as PPM plus one manifest per split under `dir` and
/// returns the manifest paths in split order.
std::vector<std::string> generate_synthetic_dataset(const std::string& dir,
                                                    const SyntheticConfig& cfg);

}  // namespace spanrank
