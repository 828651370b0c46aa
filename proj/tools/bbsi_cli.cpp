#include "bbsi/cli.hpp"

int main(int argc, char** argv) { return bbsi::cli_main(argc, argv); }
