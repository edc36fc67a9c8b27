#include "ridgeem/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ridgeem::run_cli(argc, argv, std::cout, std::cerr); }
