#include <iostream>

#include "msprt/cli.hpp"

int main(int argc, char** argv) { return msprt::cli::run_cli(argc, argv, std::cout, std::cerr); }
