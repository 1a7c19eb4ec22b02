#include "omega/cli/app.hpp"

int main(int argc, char** argv) { return omega::cli::run(argc, argv); }
