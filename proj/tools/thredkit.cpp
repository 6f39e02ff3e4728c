#include "thredkit/cli.hpp"

int main(int argc, char** argv) { return thredkit::cli::run(argc, argv); }
