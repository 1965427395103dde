#pragma once

#include <string>
#include <vector>

namespace suma::cli {

/// Entry point behind the `suma` binary. Exit codes: 0 success, 1 runtime
/// failure, 2 usage error.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

}  // namespace suma::cli
