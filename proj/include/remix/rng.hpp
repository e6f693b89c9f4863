// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace remix {

/// Counter-based random stream keyed by (seed, purpose, index).
///
/// The triple is hashed into a 64-bit key and the stream emits
/// splitmix64(key + c * golden) for c = 1, 2, ... . Streams with distinct
/// triples never share state, so parallel trials can each own one without
/// coordination, and a replay of the same triple is byte-identical.
///
/// Satisfies UniformRandomBitGenerator so it can drive <random> distributions,
/// although the library itself only uses the members below.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::string_view purpose, std::uint64_t index);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next_u64(); }

    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();

    /// Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal();

    /// Uniform integer in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound);

    /// +1 or -1 with equal probability.
    double rademacher();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t index() const { return index_; }

private:
    std::uint64_t seed_;
    std::uint64_t index_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// splitmix64 finalizer; exposed for key derivation in tests.
std::uint64_t mix64(std::uint64_t z);

}  // namespace remix
