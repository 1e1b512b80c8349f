#include "cli.hpp"

int main(int argc, char** argv) { return causaltraj::tools::run_cli(argc, argv); }
