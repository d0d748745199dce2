#include <iostream>

#include "jmsurv/cli.hpp"

int main(int argc, char** argv) { return jmsurv::run_cli(argc, argv, std::cout, std::cerr); }
