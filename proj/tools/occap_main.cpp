#include "occap/cli.hpp"

int main(int argc, char** argv) { return occap::cli::run(argc, argv); }
