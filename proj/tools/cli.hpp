#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace csdlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitDiverged = 2;

/// Entry point shared by the csdlab binary and the CLI tests.
/// args[0] is the program name.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace csdlab::cli
