#include <iostream>
#include <string>
#include <vector>

#include "pathgrad_cli/cli.h"

int main(int argc, char** argv) {
  return pathgrad::cli::Run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
