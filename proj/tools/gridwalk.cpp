#include <iostream>

#include "gridwalk/experiment.hpp"

int main(int argc, char** argv) { return gridwalk::run_cli(argc, argv, std::cout, std::cerr); }
