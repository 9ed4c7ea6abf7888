#include <iostream>
#include <string>
#include <vector>

#include "somno/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  const somno::cli::CommandOutcome outcome = somno::cli::run(args);
  std::cout << outcome.output;
  std::cerr << outcome.log;
  return outcome.exit_code;
}
