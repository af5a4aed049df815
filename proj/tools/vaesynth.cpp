#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "vaesynth/cli/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return vaesynth::cli::run(args, std::getenv("TOOL_SEED"), std::cout, std::cerr);
}
