#include <iostream>
#include <string>
#include <vector>

#include "oiqa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return oiqa::cli::run(args, std::cout, std::cerr);
}
