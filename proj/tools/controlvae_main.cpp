#include <iostream>

#include "controlvae/cli.hpp"

int main(int argc, char** argv) { return controlvae::run_cli(argc, argv, std::cout, std::cerr); }
