#include "hahe/cli.hpp"

int main(int argc, char** argv) { return hahe::run_cli(argc, argv); }
