#include <iostream>

#include "dwim/cli.hpp"

int main(int argc, char** argv) {
  return dwim::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
