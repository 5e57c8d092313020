#include "cli.hpp"

int main(int argc, char** argv) { return riskid::cli::run(argc, argv); }
