#include "coda/cli/run.hpp"

int main(int argc, char** argv) { return coda::cli::run_cli(argc, argv); }
