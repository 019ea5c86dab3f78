#include <iostream>
#include <string>
#include <vector>

#include "asdmeta/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return asdmeta::cli::run(args, std::cout, std::cerr);
}
