#include <iostream>

#include "rtkd/cli.hpp"

int main(int argc, char** argv) {
  return rtkd::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
