#include "qbstab/cli.hpp"

int main(int argc, char** argv) { return qbstab::run_cli(argc, argv); }
