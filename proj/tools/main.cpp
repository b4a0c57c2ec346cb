#include "lindeps_cli.hpp"

int main(int argc, char** argv) { return lindeps::cli::run(argc, argv); }
