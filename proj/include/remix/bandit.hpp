// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Router-only fixture. One remix layer sees a single fixed input; each frozen
// adapter i is built so that omega * B_i A_i x = c_i e_i, the head is the
// identity, and the target is W x + sum over a planted subset S* of c_i e_i.
// The loss of a selection S is then sum_{i in S xor S*} c_i^2 / (2D): a lookup
// table on subset identity with a unique zero at S*.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "remix/model.hpp"
#include "remix/rloo.hpp"
#include "remix/trainer.hpp"

namespace remix {

struct BanditSpec {
    std::size_t n = 8;
    std::size_t k = 2;
    std::size_t dim = 16;
    std::size_t rank = 2;
    /// Router init std-dev; <= 0 selects sqrt(2 / D).
    double router_sigma = 0.0;
};

struct BanditFixture {
    Model model;
    Example example;
    /// Planted subset, ascending.
    IndexList best;
    std::vector<double> magnitudes;
    std::size_t k = 2;

    /// Closed-form loss of a selection; agrees with sft_loss up to rounding.
    double planted_loss(const Selection& s) const;
    LossTable loss_table() const;
    RouterLayer router_layer() const;
    /// E_{S ~ Q}[loss] by enumerating every ordered k-tuple.
    double expected_loss() const;
    IndexList greedy_subset() const;
};

/// Throws DomainError unless 1 <= k < n <= dim.
BanditFixture make_bandit_fixture(const BanditSpec& spec, std::uint64_t seed);

/// Config that trains only the router of a bandit fixture.
TrainConfig bandit_train_config(const BanditFixture& fixture, std::uint64_t seed);

/// Runs cfg.steps router updates on batches of copies of the fixture input.
std::vector<MetricsRow> train_bandit(BanditFixture& fixture, const TrainConfig& cfg);

}  // namespace remix
