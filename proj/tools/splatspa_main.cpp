#include "splatspa/cli.hpp"

int main(int argc, char** argv) { return splatspa::cli::run(argc, argv); }
