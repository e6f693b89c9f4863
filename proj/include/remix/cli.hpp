// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end:
//   remix {collapse|verify|rloo-check|train|eval} --config <path> --out <dir>
//         [--threads N] [--bit-exact] [--checkpoint <path>]
// Configs are strict JSON objects; unknown keys are rejected. A missing "seed"
// falls back to the REMIX_SEED environment variable, then to 1.

#pragma once

namespace remix::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitIoError = 3;
inline constexpr int kExitDiverged = 4;

/// Parses arguments, runs one command, and returns its exit code. Never throws.
int run(int argc, const char* const* argv);

}  // namespace remix::cli
