// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/cli.hpp"

int main(int argc, char** argv) {
    return remix::cli::run(argc, argv);
}
