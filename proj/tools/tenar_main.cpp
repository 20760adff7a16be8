#include "tenar/cli.hpp"

int main(int argc, char** argv) { return tenar::run_cli(argc, argv); }
