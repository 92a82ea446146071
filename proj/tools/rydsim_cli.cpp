#include "rydsim/cli.hpp"

int main(int argc, char** argv) { return rydsim::cli::main(argc, argv); }
