#include <iostream>

#include "labnoise/cli.hpp"

int main(int argc, char** argv) { return labnoise::cli::run(argc, argv, std::cout, std::cerr); }
