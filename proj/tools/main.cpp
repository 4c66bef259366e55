#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"

int main(int argc, char** argv) {
  // Library warnings go to stderr so stdout stays clean for --json -.
  spdlog::set_default_logger(spdlog::stderr_color_mt("tgnet"));
  const std::vector<std::string> args(argv, argv + argc);
  return tgnet::cli::run_command(args, std::cout, std::cerr);
}
