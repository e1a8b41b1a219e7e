#include <iostream>
#include <string>
#include <vector>

#include "dspl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dspl::run_cli(args, std::cout, std::cerr);
}
