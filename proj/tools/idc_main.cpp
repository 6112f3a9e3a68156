#include "idc/cli.hpp"

int main(int argc, char** argv) { return idc::run_cli(argc, argv); }
