#include <iostream>

#include "brits/cli.hpp"

int main(int argc, char** argv) { return brits::run_cli(argc, argv, std::cout, std::cerr); }
