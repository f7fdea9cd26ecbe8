#include "spde/cli.hpp"

int main(int argc, char** argv) { return spde::cli::cli_main(argc, argv); }
