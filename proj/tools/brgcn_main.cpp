#include "brgcn/cli.hpp"

int main(int argc, char** argv) { return brgcn::run_main(argc, argv); }
