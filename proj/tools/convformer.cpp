#include <iostream>
#include <string>
#include <vector>

#include "convformer/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return convformer::cli::run(args, std::cout, std::cerr);
}
