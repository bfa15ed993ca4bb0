#include "occtime/cli.hpp"

int main(int argc, char** argv) { return occtime::cli::run(argc, argv); }
