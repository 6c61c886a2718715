#include "poly/cli.hpp"

int main(int argc, char** argv) { return poly::cli_main(argc, argv); }
