#include "csi/cli.hpp"

int main(int argc, char** argv) { return csi::cli::run(argc, argv); }
