#include "owdetr/cli/commands.hpp"

int main(int argc, char** argv) { return owdetr::cli::main_entry(argc, argv); }
