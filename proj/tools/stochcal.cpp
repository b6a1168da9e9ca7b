#include "stochcal/cli.hpp"

int main(int argc, char** argv) { return stochcal::cli::run(argc, argv); }
