#include <iostream>

#include "fpt/cli/cli.hpp"

int main(int argc, char** argv) { return fpt::cli::run({argv, argv + argc}, std::cout, std::cerr); }
