#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pulsesense {

/// Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

/// Runs one subcommand. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pulsesense
