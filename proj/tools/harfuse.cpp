#include <iostream>

#include "harfuse/cli.hpp"

int main(int argc, char** argv) { return harfuse::cli::run(argc, argv, std::cout, std::cerr); }
