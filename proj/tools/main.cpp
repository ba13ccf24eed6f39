#include <iostream>

#include "uwbpose/cli.hpp"

int main(int argc, char** argv) { return uwbpose::cli::run(argc, argv, std::cout, std::cerr); }
