#include "planpaint/cli.hpp"

int main(int argc, char** argv) { return planpaint::run_cli(argc, argv); }
