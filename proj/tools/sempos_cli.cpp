#include <iostream>

#include "sempos/cli.hpp"

int main(int argc, char** argv) { return sempos::run_cli(argc, argv, std::cout, std::cerr); }
