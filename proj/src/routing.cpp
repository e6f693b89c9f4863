// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "remix/errors.hpp"

namespace remix {

namespace {

void check_ordered(std::size_t n, std::span<const std::size_t> ordered) {
    std::vector<bool> seen(n, false);
    for (std::size_t i : ordered) {
        if (i >= n) {
            throw DomainError("selection index " + std::to_string(i) + " out of range for n = " + std::to_string(n));
        }
        if (seen[i]) {
            throw DomainError("selection index " + std::to_string(i) + " repeated");
        }
        seen[i] = true;
    }
}

}  // namespace

RoutingDistribution RoutingDistribution::from_logits(Vector logits) {
    RoutingDistribution q;
    q.probs = softmax(logits);
    q.logits = std::move(logits);
    return q;
}

RoutingDistribution RoutingDistribution::from_probs(Vector probs) {
    Vector logits(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] > 0.0)) {
            throw DomainError("RoutingDistribution::from_probs: probabilities must be positive");
        }
        logits[i] = std::log(probs[i]);
    }
    return from_logits(std::move(logits));
}

RoutingDistribution route(const Matrix& router, std::span<const double> x) {
    return RoutingDistribution::from_logits(matvec(router, x));
}

double ess(std::span<const double> weights) {
    double peak = 0.0;
    for (double w : weights) {
        peak = std::max(peak, std::abs(w));
    }
    if (peak == 0.0) {
        throw DomainError("ESS undefined for an all-zero weight vector");
    }
    // Normalizing by the largest magnitude makes k equal weights give exactly k.
    double l1 = 0.0;
    double l2 = 0.0;
    for (double w : weights) {
        const double u = std::abs(w) / peak;
        l1 += u;
        l2 += u * u;
    }
    return l1 * l1 / l2;
}

IndexList sample_without_replacement(const RoutingDistribution& q, std::size_t k, RngStream& rng) {
    const std::size_t n = q.size();
    if (k < 1 || k > n) {
        throw DomainError("sample_without_replacement: need 1 <= k <= n (k = " + std::to_string(k) +
                          ", n = " + std::to_string(n) + ")");
    }
    std::vector<bool> taken(n, false);
    IndexList out;
    out.reserve(k);
    for (std::size_t draw = 0; draw < k; ++draw) {
        double remaining = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i]) {
                remaining += q.probs[i];
            }
        }
        double u = rng.uniform() * remaining;
        std::size_t pick = n;
        std::size_t last_free = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) {
                continue;
            }
            last_free = i;
            if (u < q.probs[i]) {
                pick = i;
                break;
            }
            u -= q.probs[i];
        }
        // Rounding can leave u marginally above the final bucket.
        if (pick == n) {
            pick = last_free;
        }
        taken[pick] = true;
        out.push_back(pick);
    }
    return out;
}

double ordered_selection_logprob(const RoutingDistribution& q, std::span<const std::size_t> ordered) {
    const std::size_t n = q.size();
    check_ordered(n, ordered);
    const double log_total = log_sum_exp(q.logits);
    std::vector<bool> taken(n, false);
    Vector remaining;
    remaining.reserve(n);
    double logprob = 0.0;
    for (std::size_t i : ordered) {
        remaining.clear();
        for (std::size_t a = 0; a < n; ++a) {
            if (!taken[a]) {
                remaining.push_back(q.logits[a]);
            }
        }
        const double log_residual = log_sum_exp(remaining);
        if (log_residual - log_total < std::log(kResidualFloor)) {
            throw DegenerateResidualError("degenerate residual: remaining routing mass below 1e-12");
        }
        logprob += q.logits[i] - log_residual;
        taken[i] = true;
    }
    return logprob;
}

double selection_logprob(std::span<const RoutingDistribution> layers, const Selection& selection) {
    if (layers.size() != selection.per_layer.size()) {
        throw ShapeError("selection_logprob: selection has " + std::to_string(selection.per_layer.size()) +
                         " layers, routers have " + std::to_string(layers.size()));
    }
    double total = 0.0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        total += ordered_selection_logprob(layers[l], selection.per_layer[l]);
    }
    return total;
}

double unordered_subset_prob(const RoutingDistribution& q, std::span<const std::size_t> subset) {
    if (q.size() > kMaxEnumerationPool) {
        throw DomainError("unordered_subset_prob: n = " + std::to_string(q.size()) +
                          " exceeds the enumeration limit of 12");
    }
    check_ordered(q.size(), subset);
    IndexList order(subset.begin(), subset.end());
    std::sort(order.begin(), order.end());
    double total = 0.0;
    do {
        total += std::exp(ordered_selection_logprob(q, order));
    } while (std::next_permutation(order.begin(), order.end()));
    return total;
}

IndexList top_k(const RoutingDistribution& q, std::size_t k) {
    const std::size_t n = q.size();
    if (k < 1 || k > n) {
        throw DomainError("top_k: need 1 <= k <= n");
    }
    IndexList order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return q.probs[a] > q.probs[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

Vector selection_logit_grad(const RoutingDistribution& q, std::span<const std::size_t> ordered) {
    const std::size_t n = q.size();
    check_ordered(n, ordered);
    // d/dxi_a [xi_i - LSE(remaining)] = delta_ia - softmax_over_remaining(a).
    const double log_total = log_sum_exp(q.logits);
    std::vector<bool> taken(n, false);
    Vector grad(n, 0.0);
    Vector remaining;
    remaining.reserve(n);
    for (std::size_t i : ordered) {
        remaining.clear();
        for (std::size_t a = 0; a < n; ++a) {
            if (!taken[a]) {
                remaining.push_back(q.logits[a]);
            }
        }
        const double log_residual = log_sum_exp(remaining);
        if (log_residual - log_total < std::log(kResidualFloor)) {
            throw DegenerateResidualError("degenerate residual: remaining routing mass below 1e-12");
        }
        for (std::size_t a = 0; a < n; ++a) {
            if (!taken[a]) {
                grad[a] -= std::exp(q.logits[a] - log_residual);
            }
        }
        grad[i] += 1.0;
        taken[i] = true;
    }
    return grad;
}

Matrix selection_score_grad(const RoutingDistribution& q, std::span<const double> x,
                            std::span<const std::size_t> ordered) {
    return outer(selection_logit_grad(q, ordered), x);
}

std::vector<IndexList> enumerate_ordered_tuples(std::size_t n, std::size_t k) {
    std::vector<IndexList> out;
    if (k > n) {
        return out;
    }
    IndexList current;
    std::vector<bool> used(n, false);
    auto recurse = [&](auto&& self) -> void {
        if (current.size() == k) {
            out.push_back(current);
            return;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) {
                continue;
            }
            used[i] = true;
            current.push_back(i);
            self(self);
            current.pop_back();
            used[i] = false;
        }
    };
    recurse(recurse);
    return out;
}

std::vector<IndexList> enumerate_subsets(std::size_t n, std::size_t k) {
    std::vector<IndexList> out;
    if (k > n) {
        return out;
    }
    IndexList current;
    auto recurse = [&](auto&& self, std::size_t start) -> void {
        if (current.size() == k) {
            out.push_back(current);
            return;
        }
        for (std::size_t i = start; i + (k - current.size()) <= n; ++i) {
            current.push_back(i);
            self(self, i + 1);
            current.pop_back();
        }
    };
    recurse(recurse, 0);
    return out;
}

}  // namespace remix
