#include <iostream>
#include <string>
#include <vector>

#include "pmm_cli/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pmm::cli::run(args, std::cout, std::cerr);
}
