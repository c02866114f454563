#include <iostream>

#include "flowsos/cli.h"

int main(int argc, char** argv) { return flowsos::RunCli(argc, argv, std::cout, std::cerr); }
