#pragma once

#include <string>
#include <vector>

namespace lvm::cli {

// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical or
// training error.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

} // namespace lvm::cli
