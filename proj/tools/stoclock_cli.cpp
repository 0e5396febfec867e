// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#include "stoclock/cli.hpp"

int main(int argc, char** argv) { return stoclock::cli::main(argc, argv); }
