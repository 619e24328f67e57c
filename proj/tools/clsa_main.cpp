#include "clsa/cli.hpp"

int main(int argc, char** argv) { return clsa::cli::run(argc, argv); }
