#include "ccrs/cli.hpp"

int main(int argc, char** argv) { return ccrs::cli::run(argc, argv); }
