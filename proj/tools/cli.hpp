#ifndef IWVI_TOOLS_CLI_HPP
#define IWVI_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "iwvi/config.hpp"

namespace iwvi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Parses argv, runs the experiment and returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Runs a validated experiment into config.output, which must not exist yet.
/// Throws on runtime failure. Returns the files written (relative names).
std::vector<std::string> execute(const ExperimentConfig& config, std::ostream& out);

}  // namespace iwvi::cli

#endif  // IWVI_TOOLS_CLI_HPP
