// main.cpp - dicke command-line tool.

#include <iostream>
#include <string>
#include <vector>

#include "dicke/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dicke::run_cli(args, std::cout, std::cerr);
}
