#include "fovstream/cli.hpp"

int main(int argc, char** argv) { return fovstream::run_cli(argc, argv); }
