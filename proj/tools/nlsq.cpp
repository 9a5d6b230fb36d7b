#include "nlsq/cli.hpp"

int main(int argc, char** argv) { return nlsq::cli_main(argc, argv); }
