#include "cli.hpp"

int main(int argc, char** argv) { return suma::cli::run_cli(argc, argv); }
