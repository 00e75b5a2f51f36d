// SPDX-License-Identifier: Apache-2.0
#include "strata/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return strata::run_subcommand(args, std::cout, std::cerr);
}
