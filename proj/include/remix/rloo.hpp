// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Leave-one-out REINFORCE estimator for router parameters, plus the exact
// enumeration machinery used to check it: the true surrogate gradient
// grad_P E_{selection ~ Q}[loss], the exact expectation of the estimator over
// every M-tuple of selections, and a Monte Carlo variance probe.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "remix/numerics.hpp"
#include "remix/routing.hpp"

namespace remix {

struct Rollout {
    Selection selection;
    double loss = 0.0;
    /// grad_{P^(l)} log Q(selection), one n x D matrix per layer.
    std::vector<Matrix> score_grads;
};

struct RolloutSet {
    std::vector<Rollout> rollouts;

    double mean_loss() const;
};

/// 1/(M-1) sum_m (L_m - mean L) grad log Q_m, per layer. Throws DomainError when M < 2.
std::vector<Matrix> rloo_router_grad(const RolloutSet& set);

/// A router whose input does not depend on earlier layers' selections.
struct RouterLayer {
    Matrix router;
    Vector x;

    RoutingDistribution distribution() const { return route(router, x); }
};

using LossTable = std::function<double(const Selection&)>;

/// Selection-space size (n! / (n-k)!)^L; throws DomainError past max_size.
std::size_t selection_space_size(std::size_t n, std::size_t k, std::size_t layers, std::size_t max_size);

/// Every multi-layer selection, layer 0 varying slowest.
std::vector<Selection> enumerate_selections(std::size_t n, std::size_t k, std::size_t layers);

/// Largest selection space exact_surrogate_grad will enumerate.
inline constexpr std::size_t kMaxSelections = 100000;
/// Largest number of M-tuples unbiasedness_check will enumerate.
inline constexpr std::size_t kMaxTuples = 1000000;

/// sum over selections of Q * loss * grad log Q, per layer.
std::vector<Matrix> exact_surrogate_grad(const LossTable& loss, std::span<const RouterLayer> layers, std::size_t k);

struct UnbiasednessResult {
    std::size_t selections = 0;
    std::size_t tuples = 0;
    double max_deviation = 0.0;
    std::vector<Matrix> expected_estimate;
    std::vector<Matrix> exact;
};

/// E[rloo_router_grad] computed exactly by enumerating all s^M ordered sample
/// tuples weighted by prod Q, compared with exact_surrogate_grad.
UnbiasednessResult unbiasedness_check(const LossTable& loss, std::span<const RouterLayer> layers, std::size_t k,
                                      std::size_t rollouts);

struct VarianceSummary {
    std::size_t rollouts = 0;
    std::size_t trials = 0;
    /// Per-entry sample means and variances of the estimate, per layer.
    std::vector<Matrix> mean;
    std::vector<Matrix> variance;
    /// Frobenius norm of the stacked variance matrices.
    double variance_frobenius = 0.0;
    /// Sum of all per-entry variances.
    double total_variance = 0.0;
};

/// Monte Carlo variance of rloo_router_grad over independent rollout sets.
/// Trial t draws from RngStream(seed, "rloo-variance", t), so the result does
/// not depend on the thread count.
VarianceSummary estimator_variance(const LossTable& loss, std::span<const RouterLayer> layers, std::size_t k,
                                   std::size_t rollouts, std::size_t trials, std::uint64_t seed,
                                   std::size_t threads = 1);

}  // namespace remix
