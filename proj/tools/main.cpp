#include "mmpd/cli.hpp"

int main(int argc, char** argv) { return mmpd::run_cli(argc, argv); }
