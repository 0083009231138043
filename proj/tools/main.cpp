#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "vern/training.hpp"

int main(int argc, char** argv) {
  vern::keep_heap_warm();
  std::vector<std::string> args(argv, argv + argc);
  return vern::cli::run(args, std::cout, std::cerr);
}
