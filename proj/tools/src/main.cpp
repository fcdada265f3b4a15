#include <iostream>

#include "segvit_cli/cli.hpp"

int main(int argc, char** argv) { return segvit::cli_dispatch(argc, argv, std::cout, std::cerr); }
