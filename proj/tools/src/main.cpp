#include <iostream>

#include "eegrel_cli/app.hpp"

int main(int argc, char** argv) { return eegrel::cli::run(argc, argv, std::cout, std::cerr); }
