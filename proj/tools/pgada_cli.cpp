#include "pgada/cli.hpp"

int main(int argc, char** argv) { return pgada::run_cli(argc, argv); }
