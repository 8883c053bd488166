#include "lingsel/cli.hpp"

int main(int argc, char** argv) { return lingsel::cli::run(argc, argv); }
