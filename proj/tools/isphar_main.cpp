#include <iostream>
#include <string>
#include <vector>

#include "isphar/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return isphar::run_command(args, std::cout, std::cerr);
}
