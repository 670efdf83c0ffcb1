#include "spanrank/filterbank.hpp"

#include <cmath>
#include <utility>

namespace spanrank {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::MatrixXd normalize_zero_mean_l1(Eigen::MatrixXd k) {
  k.array() -= k.mean();
  const double mass = k.cwiseAbs().sum();
  if (mass > 0.0) k /= mass;
  return k;
}

}  // namespace

bool is_isotropic(FilterKind kind) {
  return kind == FilterKind::Gaussian || kind == FilterKind::Log || kind == FilterKind::Schmid;
}

void FilterSpec::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidSpec("filter scale must be positive");
  if (resolution < 1 || resolution % 2 == 0)
    throw InvalidSpec("filter resolution must be odd and positive");
  if (!std::isfinite(orientation) || orientation < 0.0 || orientation >= kPi)
    throw InvalidSpec("filter orientation must lie in [0, pi)");
  if (is_isotropic(kind) && orientation != 0.0)
    throw InvalidSpec("isotropic filters carry orientation 0");
  if (kind == FilterKind::Schmid && tau < 1) throw InvalidSpec("schmid tau must be >= 1");
}

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::Gaussian: return "gaussian";
    case FilterKind::Dog1: return "dog1";
    case FilterKind::Dog2: return "dog2";
    case FilterKind::Log: return "log";
    case FilterKind::Schmid: return "schmid";
  }
  return "unknown";
}

std::string to_string(BankName name) {
  switch (name) {
    case BankName::LM: return "lm";
    case BankName::MR: return "mr";
    case BankName::S: return "s";
    case BankName::Combined: return "combined";
  }
  return "unknown";
}

FilterKind parse_filter_kind(const std::string& text) {
  if (text == "gaussian") return FilterKind::Gaussian;
  if (text == "dog1") return FilterKind::Dog1;
  if (text == "dog2") return FilterKind::Dog2;
  if (text == "log") return FilterKind::Log;
  if (text == "schmid") return FilterKind::Schmid;
  throw InvalidSpec("unknown filter kind: " + text);
}

BankName parse_bank_name(const std::string& text) {
  if (text == "lm") return BankName::LM;
  if (text == "mr") return BankName::MR;
  if (text == "s") return BankName::S;
  if (text == "combined") return BankName::Combined;
  throw InvalidSpec("unknown bank name: " + text);
}

Eigen::MatrixXd realize_kernel(FilterKind kind, double scale, double orientation, double tau,
                               int resolution) {
  if (!(scale > 0.0)) throw InvalidSpec("filter scale must be positive");
  if (resolution < 1 || resolution % 2 == 0)
    throw InvalidSpec("filter resolution must be odd and positive");
  const int half = resolution / 2;
  Eigen::MatrixXd k(resolution, resolution);

  const double cos_o = std::cos(orientation);
  const double sin_o = std::sin(orientation);
  const double sigma = scale;
  const double sigma_long = 3.0 * scale;

  for (int row = 0; row < resolution; ++row) {
    const double y = static_cast<double>(row - half);
    for (int col = 0; col < resolution; ++col) {
      const double x = static_cast<double>(col - half);
      double value = 0.0;
      switch (kind) {
        case FilterKind::Gaussian: {
          value = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
          break;
        }
        case FilterKind::Log: {
          const double rho2 = x * x + y * y;
          value = (rho2 - 2.0 * sigma * sigma) * std::exp(-rho2 / (2.0 * sigma * sigma));
          break;
        }
        case FilterKind::Dog1:
        case FilterKind::Dog2: {
          // Rotated frame: u along the long axis, w along the short axis the
          // derivative acts on.
          const double u = cos_o * x + sin_o * y;
          const double w = -sin_o * x + cos_o * y;
          const double envelope =
              std::exp(-u * u / (2.0 * sigma_long * sigma_long) - w * w / (2.0 * sigma * sigma));
          value = kind == FilterKind::Dog1 ? -w * envelope : (w * w - sigma * sigma) * envelope;
          break;
        }
        case FilterKind::Schmid: {
          const double rho = std::sqrt(x * x + y * y);
          value = std::cos(kPi * tau * rho / sigma) * std::exp(-rho * rho / (2.0 * sigma * sigma));
          break;
        }
      }
      k(row, col) = value;
    }
  }

  if (kind == FilterKind::Gaussian) {
    const double sum = k.sum();
    if (sum > 0.0) k /= sum;
    return k;
  }
  return normalize_zero_mean_l1(std::move(k));
}

Eigen::MatrixXd make_kernel(const FilterSpec& spec) {
  spec.validate();
  return realize_kernel(spec.kind, spec.scale, spec.orientation, static_cast<double>(spec.tau),
                        spec.resolution);
}

FilterBank make_bank(BankName name, int resolution) {
  const double sqrt2 = std::sqrt(2.0);
  FilterBank bank;
  bank.name = name;

  const auto push = [&](FilterKind kind, double scale, double orientation, int tau) {
    FilterSpec spec;
    spec.kind = kind;
    spec.scale = scale;
    spec.orientation = orientation;
    spec.tau = tau;
    spec.resolution = resolution;
    bank.filters.push_back(spec);
  };
  const auto push_derivatives = [&](const std::vector<double>& scales) {
    for (const FilterKind kind : {FilterKind::Dog1, FilterKind::Dog2})
      for (const double scale : scales)
        for (int o = 0; o < 6; ++o) push(kind, scale, o * kPi / 6.0, 1);
  };

  switch (name) {
    case BankName::LM: {
      push_derivatives({sqrt2, 2.0, 2.0 * sqrt2});
      for (const double scale : {sqrt2, 2.0, 2.0 * sqrt2, 4.0}) push(FilterKind::Log, scale, 0.0, 1);
      for (const double scale : {3.0 * sqrt2, 6.0, 6.0 * sqrt2, 12.0})
        push(FilterKind::Log, scale, 0.0, 1);
      for (const double scale : {sqrt2, 2.0, 2.0 * sqrt2, 4.0})
        push(FilterKind::Gaussian, scale, 0.0, 1);
      break;
    }
    case BankName::MR: {
      push_derivatives({1.0, 2.0, 4.0});
      push(FilterKind::Gaussian, 10.0, 0.0, 1);
      push(FilterKind::Log, 10.0, 0.0, 1);
      break;
    }
    case BankName::S: {
      static constexpr std::pair<double, int> pairs[] = {
          {2.0, 1}, {4.0, 1}, {4.0, 2}, {6.0, 1},  {6.0, 2},  {6.0, 3},  {8.0, 1},
          {8.0, 2}, {8.0, 3}, {10.0, 1}, {10.0, 2}, {10.0, 3}, {10.0, 4}};
      for (const auto& [scale, tau] : pairs) push(FilterKind::Schmid, scale, 0.0, tau);
      break;
    }
    case BankName::Combined: {
      for (const BankName part : {BankName::LM, BankName::MR, BankName::S}) {
        FilterBank sub = make_bank(part, resolution);
        bank.filters.insert(bank.filters.end(), sub.filters.begin(), sub.filters.end());
      }
      break;
    }
  }
  return bank;
}

}  // namespace spanrank
