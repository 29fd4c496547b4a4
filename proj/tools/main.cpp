// SPDX-License-Identifier: Apache-2.0

#include "structchem/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return structchem::cli_main(args, std::cout, std::cerr);
}
