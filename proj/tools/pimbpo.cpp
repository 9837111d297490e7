#include "pimbpo/bench/cli.hpp"

#include <iostream>

int main(int argc, char **argv) { return pimbpo::bench::run_cli(argc, argv, std::cout, std::cerr); }
