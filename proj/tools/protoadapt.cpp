// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "protoadapt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return protoadapt::cli::run(args, std::cout, std::cerr);
}
