#include <iostream>

#include "asvkit/cli.hpp"

int main(int argc, char** argv) { return asv::cli::run(argc, argv, std::cout, std::cerr); }
