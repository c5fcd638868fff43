#include "kforge/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return kforge::run_cli(argc, argv, std::cout, std::cerr); }
