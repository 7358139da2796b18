#include "edich/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return edich::cli::run(argc, argv, std::cout, std::cerr); }
