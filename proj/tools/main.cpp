#include "pathgrade/cli.hpp"

int main(int argc, char** argv) {
    return pathgrade::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
