#pragma once

#include <string>
#include <vector>

namespace spanrank {

inline constexpr const char* kVersion = "0.1.0";

/// Command-line entry point. Returns 0 on success, 1 on usage errors
/// (synopsis goes to stderr), 2 on data errors.
int run(const std::vector<std::string>& args);

}  // namespace spanrank
