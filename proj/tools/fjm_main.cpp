#include "fjm/cli.hpp"

int main(int argc, char** argv) { return fjm::run_cli(argc, argv); }
