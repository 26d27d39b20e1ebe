#include "amplio/cli.hpp"

int main(int argc, char** argv) { return amplio::run_cli(argc, argv); }
