#include <iostream>

#include "mngn2/cli.hpp"

int main(int argc, char** argv) {
  return mngn2::cli::run_main(argc, argv, std::cout, std::cerr);
}
