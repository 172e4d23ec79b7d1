#include "shadownet/cli.hpp"

int main(int argc, char** argv) { return shadownet::cli_main(argc, argv); }
