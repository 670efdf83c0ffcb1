#pragma once

#include <stdexcept>
#include <string>

namespace spanrank {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyClass : Error {
  explicit EmptyClass(const std::string& what) : Error(what) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(what) {}
};

struct SingularDenominator : Error {
  explicit SingularDenominator(const std::string& what) : Error(what) {}
};

struct DegenerateDenominator : Error {
  explicit DegenerateDenominator(const std::string& what) : Error(what) {}
};

struct NonFiniteObjective : Error {
  explicit NonFiniteObjective(const std::string& what) : Error(what) {}
};

struct EmptySelection : Error {
  explicit EmptySelection(const std::string& what) : Error(what) {}
};

struct InvalidSpec : Error {
  explicit InvalidSpec(const std::string& what) : Error(what) {}
};

struct UnsupportedFormat : Error {
  explicit UnsupportedFormat(const std::string& what) : Error(what) {}
};

struct ImageTooSmall : Error {
  explicit ImageTooSmall(const std::string& what) : Error(what) {}
};

struct NonFiniteTrace : Error {
  explicit NonFiniteTrace(const std::string& what) : Error(what) {}
};

struct EmptySplit : Error {
  explicit EmptySplit(const std::string& what) : Error(what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace spanrank
