#include "siss/harness.hpp"

int main(int argc, char** argv) { return siss::cli_dispatch(argc, argv); }
