#include "synthgap/cli.hpp"

int main(int argc, char** argv) { return synthgap::cli_main(argc, argv); }
