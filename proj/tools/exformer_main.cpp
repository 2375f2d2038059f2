#include <iostream>
#include <string>
#include <vector>

#include "tse/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return tse::cli::run(args, std::cout, std::cerr);
}
