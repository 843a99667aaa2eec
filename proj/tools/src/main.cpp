#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("price");
  spdlog::set_default_logger(logger);
  const char* level = std::getenv("PRICE_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
  return price::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
