#include "rbsteer/cli.hpp"

int main(int argc, char** argv) { return rbsteer::cli::run(argc, argv); }
