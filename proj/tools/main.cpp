#include <iostream>

#include "cli.hpp"
#include "vr4/config.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return vr4::cli::run(args, vr4::config::process_environment(), std::cout, std::cerr);
}
