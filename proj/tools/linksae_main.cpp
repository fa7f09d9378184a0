#include "linksae/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return linksae::dispatch(argc, argv, std::cout, std::cerr); }
