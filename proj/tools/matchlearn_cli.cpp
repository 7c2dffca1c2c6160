#include "matchlearn/cli.hpp"

int main(int argc, char** argv) { return matchlearn::cli_main(argc, argv); }
