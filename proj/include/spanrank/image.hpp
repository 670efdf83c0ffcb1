#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

#include "spanrank/errors.hpp"
#include "spanrank/instance_set.hpp"

namespace spanrank {

/// 8-bit raster, interleaved samples, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t sample(int row, int col, int channel) const {
    return pixels[static_cast<std::size_t>((row * width + col) * channels + channel)];
  }
};

/// CIE-Lab planes of one image, each standardized to zero mean and unit
/// variance over the image (constant channels become all zeros).
struct LabImage {
  int width = 0;
  int height = 0;
  std::array<Eigen::MatrixXd, 3> channels;  // L*, a*, b*; rows = height
};

/// sRGB (D65) to L*a*b* for one 8-bit pixel, before any normalization.
std::array<double, 3> srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Converts an 8-bit raster to normalized CIE-Lab planes. Gray images are
/// treated as replicated channels. Throws UnsupportedFormat for channel
/// counts other than 1 or 3.
LabImage rgb_to_lab_normalized(const Image8& image);

/// True convolution (kernel flipped) with symmetric reflect padding and
/// same-size output. Throws ImageTooSmall when the plane is smaller than the
/// kernel.
Eigen::MatrixXd convolve_reflect(const Eigen::MatrixXd& plane, const Eigen::MatrixXd& kernel);

/// Per-pixel responses of one image to one kernel: an (width*height) x 3
/// matrix, rows ordered by (row, column).
Eigen::MatrixXd image_responses(const LabImage& image, const Eigen::MatrixXd& kernel);

/// Convolves the kernel with every image and stacks the per-pixel 3-channel
/// responses into one labeled instance set (label = image class), ordered by
/// (image, row, column).
LabeledInstanceSet filter_responses(const std::vector<LabImage>& images,
                                    const std::vector<int>& labels, int num_classes,
                                    const Eigen::MatrixXd& kernel);

}  // namespace spanrank
