#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace wildfire {

inline constexpr std::string_view kToolVersion = "1.0.0";
inline constexpr int kCheckpointFormat = 1;
inline constexpr int kSchemaFormat = 1;
inline constexpr int kReportFormat = 1;

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Runs the tool with argv-style arguments (args[0] is the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wildfire
