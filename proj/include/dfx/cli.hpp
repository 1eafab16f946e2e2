#pragma once

#include <string>
#include <vector>

namespace dfx {

// Entry point shared by the binary and the tests. args excludes argv[0].
// Exit codes: 0 success, 2 validation error, 3 estimation failure (partial
// results are still written).
int run_cli(const std::vector<std::string>& args);

}  // namespace dfx
