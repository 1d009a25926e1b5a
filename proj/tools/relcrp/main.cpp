#include "cli.hpp"

int main(int argc, char** argv) { return relcrp::cli::run(argc, argv); }
