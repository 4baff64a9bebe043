#include <iostream>

#include "gridseek/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return gridseek::cli::run(args, std::cout, std::cerr);
}
