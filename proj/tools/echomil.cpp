#include <iostream>

#include "echomil/cli.hpp"

int main(int argc, char** argv) { return echomil::run_cli(argc, argv, std::cout, std::cerr); }
