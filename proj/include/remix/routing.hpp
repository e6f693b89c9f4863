// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Routing distributions over a pool of n adapters: effective support size,
// sequential sampling without replacement, exact ordered/unordered selection
// probabilities, their score gradients, and top-k selection.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "remix/numerics.hpp"
#include "remix/rng.hpp"

namespace remix {

using IndexList = std::vector<std::size_t>;

/// n-way categorical distribution produced by a router: probs = softmax(logits).
struct RoutingDistribution {
    Vector logits;
    Vector probs;

    std::size_t size() const { return probs.size(); }
    static RoutingDistribution from_logits(Vector logits);
    /// Builds a distribution from explicit positive probabilities (logits = log probs).
    static RoutingDistribution from_probs(Vector probs);
};

/// Ordered activated-adapter lists, one per layer, each of length k.
struct Selection {
    std::vector<IndexList> per_layer;

    bool operator==(const Selection&) const = default;
    bool operator<(const Selection& other) const { return per_layer < other.per_layer; }
};

/// Residual probability mass below which an ordered selection is rejected.
inline constexpr double kResidualFloor = 1e-12;

/// Largest pool for which unordered probabilities are enumerated.
inline constexpr std::size_t kMaxEnumerationPool = 12;

/// logits = P x, probs = softmax(logits).
RoutingDistribution route(const Matrix& router, std::span<const double> x);

/// Effective support size (sum |w|)^2 / sum w^2. Throws DomainError on an all-zero vector.
double ess(std::span<const double> weights);

/// Sequential categorical draws, renormalizing over the indices not yet drawn.
IndexList sample_without_replacement(const RoutingDistribution& q, std::size_t k, RngStream& rng);

/// log prod_j q_{i_j} / (1 - sum_{j' < j} q_{i_j'}), evaluated in the logit domain.
/// Throws DomainError on duplicate/out-of-range indices or when a residual mass
/// falls below kResidualFloor.
double ordered_selection_logprob(const RoutingDistribution& q, std::span<const std::size_t> ordered);

/// Sum over multi-layer selection of the per-layer ordered log-probabilities.
double selection_logprob(std::span<const RoutingDistribution> layers, const Selection& selection);

/// Probability that sampling without replacement yields exactly this set, in any order.
double unordered_subset_prob(const RoutingDistribution& q, std::span<const std::size_t> subset);

/// Indices of the k largest probabilities, ties toward the lower index, returned ascending.
IndexList top_k(const RoutingDistribution& q, std::size_t k);

/// Gradient of ordered_selection_logprob with respect to the logits.
Vector selection_logit_grad(const RoutingDistribution& q, std::span<const std::size_t> ordered);

/// Gradient of ordered_selection_logprob with respect to the router matrix P,
/// given logits = P x: selection_logit_grad outer x.
Matrix selection_score_grad(const RoutingDistribution& q, std::span<const double> x,
                            std::span<const std::size_t> ordered);

/// Every ordered k-tuple of distinct indices in [0, n), in lexicographic order.
std::vector<IndexList> enumerate_ordered_tuples(std::size_t n, std::size_t k);

/// Every k-subset of [0, n), ascending within and lexicographic across.
std::vector<IndexList> enumerate_subsets(std::size_t n, std::size_t k);

}  // namespace remix
