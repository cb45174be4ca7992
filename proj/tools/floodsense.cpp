#include "floodsense/cli.hpp"

int main(int argc, char** argv) { return floodsense::cli::run(argc, argv); }
