#include <iostream>
#include <string>
#include <vector>

#include "objnav/harness/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return objnav::harness::run_cli(args, std::cout, std::cerr);
}
