#include <iostream>

#include "qacoop/cli.h"

int main(int argc, char** argv) {
  return qacoop::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
