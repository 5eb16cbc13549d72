#include "homoglab/cli.hpp"

int main(int argc, char** argv) { return homoglab::cli::run_cli(argc, argv); }
