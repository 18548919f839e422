#include "hilight/cli.hpp"

int main(int argc, char** argv) { return hilight::cli::run(argc, argv); }
