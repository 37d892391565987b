#include "commands.hpp"

int main(int argc, char** argv) { return bidrn::cli::run(argc, argv); }
