#include <iostream>

#include "octseg/cli/cli.hpp"

int main(int argc, char** argv) {
    return octseg::cli::run(argc, argv, std::cout, std::cerr);
}
