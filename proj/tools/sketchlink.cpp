#include <iostream>

#include "sketchlink/cli.hpp"

int main(int argc, char** argv) { return sketchlink::run_cli(argc, argv, std::cout, std::cerr); }
