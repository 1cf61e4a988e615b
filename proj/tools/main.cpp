#include <iostream>

#include "wdis/cli.hpp"

int main(int argc, char** argv) { return wdis::run_cli(argc, argv, std::cout, std::cerr); }
