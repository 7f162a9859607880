#include <iostream>

#include "survcate/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return survcate::cli::run_cli(args, std::cout, std::cerr);
}
