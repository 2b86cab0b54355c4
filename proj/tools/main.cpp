#include "simrod/cli.hpp"

int main(int argc, char** argv) { return simrod::cli::run(argc, argv); }
