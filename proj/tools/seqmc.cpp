#include "seqmc/cli/dispatch.hpp"

int main(int argc, char** argv) { return seqmc::cli::dispatch(argc, argv); }
