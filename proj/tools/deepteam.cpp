#include "deepteam/cli.hpp"

int main(int argc, char** argv) { return deepteam::run_cli(argc, argv); }
