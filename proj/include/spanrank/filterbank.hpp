#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "spanrank/errors.hpp"

namespace spanrank {

enum class FilterKind { Gaussian, Dog1, Dog2, Log, Schmid };

enum class BankName { LM, MR, S, Combined };

/// Parametric filter definition. `scale` is the short-axis sigma in pixels;
/// derivative kinds stretch the long axis to 3*scale and rotate by
/// `orientation`. `tau` is the Schmid ring count. `resolution` is the odd
/// kernel side length.
struct FilterSpec {
  FilterKind kind = FilterKind::Gaussian;
  double scale = 1.0;
  double orientation = 0.0;
  int tau = 1;
  int resolution = 49;

  void validate() const;
};

struct FilterBank {
  BankName name = BankName::Combined;
  std::vector<FilterSpec> filters;
};

bool is_isotropic(FilterKind kind);

std::string to_string(FilterKind kind);
std::string to_string(BankName name);
FilterKind parse_filter_kind(const std::string& text);
BankName parse_bank_name(const std::string& text);

/// Realizes the kernel on the centered integer grid. Gaussian kernels are
/// L1-normalized to unit sum; every other kind is mean-subtracted and then
/// L1-normalized (zero sum, unit absolute mass).
Eigen::MatrixXd make_kernel(const FilterSpec& spec);

/// Kernel with continuous Schmid tau, used while optimizing parameters.
Eigen::MatrixXd realize_kernel(FilterKind kind, double scale, double orientation, double tau,
                               int resolution);

/// Canonical banks: LM (48), MR (38), S (13), combined (99, LM then MR then
/// S). The resolution applies to every filter.
FilterBank make_bank(BankName name, int resolution = 49);

}  // namespace spanrank
