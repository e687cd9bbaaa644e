#include "fallpred/cli.hpp"

int main(int argc, char** argv) { return fallpred::cli::run(argc, argv); }
