#pragma once

#include <ostream>

namespace vlp {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 1 usage, 2 validation or data error, 3 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vlp
