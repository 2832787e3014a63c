#include "cmaprank/cli.hpp"

int main(int argc, char** argv) { return cmaprank::run_cli(argc, argv); }
