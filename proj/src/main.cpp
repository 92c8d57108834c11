#include <iostream>

#include "svae/cli.hpp"

int main(int argc, char** argv) {
    return svae::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
