#include <iostream>

#include "gpbart/cli.hpp"

int main(int argc, char** argv) {
  gpbart::tune_allocator();
  return gpbart::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
