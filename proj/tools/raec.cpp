#include <raec/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return raec::cli::dispatch(argc, argv, std::cout, std::cerr); }
