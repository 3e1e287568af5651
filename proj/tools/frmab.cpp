#include <iostream>

#include "frmab/cli.hpp"

int main(int argc, char** argv) { return frmab::cli::run(argc, argv, std::cout, std::cerr); }
