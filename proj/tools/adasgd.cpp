#include "adasgd/cli.hpp"

int main(int argc, char** argv) { return adasgd::cli::run_main(argc, argv); }
