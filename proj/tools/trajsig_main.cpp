// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "trajsig/commands.hpp"

int main(int argc, char** argv) { return trajsig::cli::run(argc, argv, std::cout, std::cerr); }
