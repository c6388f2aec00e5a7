#include "fcprint/commands.hpp"

int main(int argc, char** argv) { return fcprint::cli::run_cli(argc, argv); }
