#include <iostream>

#include "csmae/cli.hpp"

int main(int argc, char** argv) { return csmae::run_cli(argc, argv, std::cout, std::cerr); }
