#include "guidedec/cli/commands.hpp"

int main(int argc, char** argv) { return guidedec::cli::run_cli(argc, argv); }
