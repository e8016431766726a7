#include "chargenet/cli/app.hpp"

int main(int argc, char** argv) { return chargenet::cli::run(argc, argv); }
