#include "ngramgrad/cli.hpp"

int main(int argc, char** argv) { return ngramgrad::cli::run(argc, argv); }
