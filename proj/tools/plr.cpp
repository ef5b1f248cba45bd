#include <iostream>

#include "plr/cli.hpp"

int main(int argc, char** argv) { return plr::cli::run(argc, argv, std::cout, std::cerr); }
