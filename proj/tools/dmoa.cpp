#include <iostream>
#include <string>
#include <vector>

#include "dmoa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dmoa::run_cli(args, std::cout, std::cerr);
}
