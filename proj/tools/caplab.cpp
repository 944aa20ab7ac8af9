#include <iostream>
#include <string>
#include <vector>

#include "caplab/cli.hpp"

int main(int argc, char** argv) {
  return caplab::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
