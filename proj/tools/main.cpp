#include <iostream>

#include "tamed/cli.hpp"

int main(int argc, char** argv) { return tamed::cli::run(argc, argv, std::cout, std::cerr); }
