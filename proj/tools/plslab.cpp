#include "plslab/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return plslab::run_cli(argc, argv, std::cout, std::cerr);
}
