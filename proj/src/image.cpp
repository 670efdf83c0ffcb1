#include "spanrank/image.hpp"

#include <cmath>
#include <string>

namespace spanrank {

namespace {

// sRGB 8-bit value to linear intensity.
double linearize(std::uint8_t v) {
  const double u = static_cast<double>(v) / 255.0;
  return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  constexpr double delta3 = delta * delta * delta;
  return t > delta3 ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

void standardize(Eigen::MatrixXd& plane) {
  const double mean = plane.mean();
  plane.array() -= mean;
  const double var = plane.array().square().sum() / static_cast<double>(plane.size());
  const double sd = std::sqrt(var);
  if (sd <= 1e-12 * (1.0 + std::abs(mean)))
    plane.setZero();
  else
    plane /= sd;
}

int reflect(int i, int n) {
  // Symmetric reflection with the edge sample repeated.
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

}  // namespace

std::array<double, 3> srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double rl = linearize(r);
  const double gl = linearize(g);
  const double bl = linearize(b);
  // sRGB to XYZ, D65 white point.
  const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  const double fx = lab_f(x / 0.95047);
  const double fy = lab_f(y / 1.0);
  const double fz = lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

LabImage rgb_to_lab_normalized(const Image8& image) {
  if (image.channels != 1 && image.channels != 3)
    throw UnsupportedFormat("expected 1- or 3-channel 8-bit raster, got " +
                            std::to_string(image.channels) + " channels");
  if (image.width < 1 || image.height < 1) throw UnsupportedFormat("empty raster");
  if (image.pixels.size() !=
      static_cast<std::size_t>(image.width) * image.height * image.channels)
    throw UnsupportedFormat("raster byte count does not match dimensions");

  LabImage out;
  out.width = image.width;
  out.height = image.height;
  for (auto& plane : out.channels) plane.resize(image.height, image.width);

  for (int row = 0; row < image.height; ++row) {
    for (int col = 0; col < image.width; ++col) {
      std::uint8_t r, g, b;
      if (image.channels == 3) {
        r = image.sample(row, col, 0);
        g = image.sample(row, col, 1);
        b = image.sample(row, col, 2);
      } else {
        r = g = b = image.sample(row, col, 0);
      }
      const auto lab = srgb_to_lab(r, g, b);
      for (int ch = 0; ch < 3; ++ch) out.channels[static_cast<std::size_t>(ch)](row, col) = lab[static_cast<std::size_t>(ch)];
    }
  }
  for (auto& plane : out.channels) standardize(plane);
  return out;
}

Eigen::MatrixXd convolve_reflect(const Eigen::MatrixXd& plane, const Eigen::MatrixXd& kernel) {
  if (kernel.rows() != kernel.cols() || kernel.rows() % 2 == 0)
    throw InvalidSpec("convolve_reflect: kernel must be square with odd side");
  const Eigen::Index half = kernel.rows() / 2;
  const Eigen::Index rows = plane.rows();
  const Eigen::Index cols = plane.cols();
  if (rows < kernel.rows() || cols < kernel.cols())
    throw ImageTooSmall("image " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " is smaller than the " + std::to_string(kernel.rows()) + "x" +
                        std::to_string(kernel.cols()) + " kernel");

  Eigen::MatrixXd padded(rows + 2 * half, cols + 2 * half);
  for (Eigen::Index i = 0; i < padded.rows(); ++i) {
    const int src_row = reflect(static_cast<int>(i - half), static_cast<int>(rows));
    for (Eigen::Index j = 0; j < padded.cols(); ++j) {
      const int src_col = reflect(static_cast<int>(j - half), static_cast<int>(cols));
      padded(i, j) = plane(src_row, src_col);
    }
  }

  // True convolution: the kernel is flipped relative to cross-correlation.
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index u = 0; u < kernel.rows(); ++u)
    for (Eigen::Index v = 0; v < kernel.cols(); ++v)
      out.noalias() += kernel(u, v) * padded.block(2 * half - u, 2 * half - v, rows, cols);
  return out;
}

Eigen::MatrixXd image_responses(const LabImage& image, const Eigen::MatrixXd& kernel) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(image.width) * image.height;
  Eigen::MatrixXd out(pixels, 3);
  for (int ch = 0; ch < 3; ++ch) {
    const Eigen::MatrixXd response = convolve_reflect(image.channels[static_cast<std::size_t>(ch)], kernel);
    Eigen::Index row = 0;
    for (int r = 0; r < image.height; ++r)
      for (int c = 0; c < image.width; ++c) out(row++, ch) = response(r, c);
  }
  return out;
}

LabeledInstanceSet filter_responses(const std::vector<LabImage>& images,
                                    const std::vector<int>& labels, int num_classes,
                                    const Eigen::MatrixXd& kernel) {
  if (images.size() != labels.size())
    throw DimensionError("filter_responses: image and label counts differ");
  Eigen::Index total = 0;
  for (const LabImage& image : images) total += static_cast<Eigen::Index>(image.width) * image.height;

  LabeledInstanceSet set;
  set.num_classes = num_classes;
  set.data.resize(total, 3);
  set.labels.resize(total);
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Eigen::MatrixXd block = image_responses(images[i], kernel);
    set.data.middleRows(offset, block.rows()) = block;
    set.labels.segment(offset, block.rows()).setConstant(labels[i]);
    offset += block.rows();
  }
  return set;
}

}  // namespace spanrank
