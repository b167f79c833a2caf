#include <iostream>

#include "cli.h"

int main(int argc, char** argv) {
  return blindsim::RunCli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
