#include <iostream>

#include "rspin/cli.hpp"

int main(int argc, char** argv) { return rspin::cli::run_cli(argc, argv, std::cout, std::cerr); }
