#include <iostream>
#include <string>
#include <vector>

#include "cvar_mdp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cvar_mdp::cli::run(args, std::cout, std::cerr);
}
