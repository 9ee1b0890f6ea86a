#include "sdlab/cli.hpp"

int main(int argc, char** argv) { return sdlab::run_cli(argc, argv); }
