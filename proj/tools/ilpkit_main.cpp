#include <iostream>

#include "ilpkit/cli/app.hpp"

int main(int argc, char** argv) { return ilpkit::cli::run_cli(argc, argv, std::cout, std::cerr); }
