#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace somno::cli {

/// 0 success, 1 bad input or arguments, 2 empty or infeasible computation,
/// 3 internal error.
struct CommandOutcome {
  int exit_code = 0;
  std::vector<std::filesystem::path> report_paths;
  std::string log;
  std::string output;  // what the command prints on stdout
};

/// Runs one subcommand; `args` excludes the program name.
CommandOutcome run(const std::vector<std::string>& args);

}  // namespace somno::cli
