#include <iostream>

#include "quic/cli.hpp"

int main(int argc, char** argv) { return quic::cli::run(argc, argv, std::cout, std::cerr); }
