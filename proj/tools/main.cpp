#include <iostream>
#include <string>
#include <vector>

#include "stereodistill/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stereodistill::run_cli(args, std::cout, std::cerr).exit_code;
}
