#include "pat/cli.hpp"

int main(int argc, char** argv) { return pat::run_cli(argc, argv); }
