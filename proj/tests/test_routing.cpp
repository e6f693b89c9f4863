// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>

#include "remix/errors.hpp"
#include "remix/routing.hpp"

using namespace remix;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

RoutingDistribution random_distribution(RngStream& rng, std::size_t n, double scale = 1.0) {
    Vector logits(n);
    for (double& v : logits) {
        v = scale * rng.normal();
    }
    return RoutingDistribution::from_logits(logits);
}

// Direct product formula over probabilities, no logit tricks.
double ordered_prob_oracle(const Vector& q, const IndexList& t) {
    double p = 1.0;
    double used = 0.0;
    for (std::size_t i : t) {
        p *= q[i] / (1.0 - used);
        used += q[i];
    }
    return p;
}

}  // namespace

TEST_CASE("ess of equal, one-hot and mixed weights", "[ess]") {
    CHECK(ess(Vector{1.0, 0.0, 0.0}) == 1.0);
    for (std::size_t k = 1; k <= 16; ++k) {
        CHECK(ess(Vector(k, 0.37)) == static_cast<double>(k));
    }
    CHECK(ess(Vector{0.7, 0.7, 0.0, 0.0}) == 2.0);
    CHECK_THAT(ess(Vector{0.5, 0.25, 0.25}), WithinRel(1.0 / 0.375, 1e-15));
    CHECK_THROWS_AS(ess(Vector{0.0, 0.0}), DomainError);
}

TEST_CASE("ess lies in [1, n]", "[ess]") {
    RngStream rng(2, "ess", 0);
    for (int t = 0; t < 200; ++t) {
        const auto q = random_distribution(rng, 8, 3.0);
        const double e = ess(q.probs);
        CHECK(e >= 1.0);
        CHECK(e <= 8.0 + 1e-12);
    }
}

TEST_CASE("ordered selection probabilities match the product formula and sum to one", "[selection]") {
    RngStream rng(5, "ordered", 0);
    for (std::size_t n = 2; n <= 5; ++n) {
        for (std::size_t k = 1; k <= n; ++k) {
            const auto q = random_distribution(rng, n);
            double total = 0.0;
            for (const auto& t : enumerate_ordered_tuples(n, k)) {
                const double p = std::exp(ordered_selection_logprob(q, t));
                CHECK_THAT(p, WithinRel(ordered_prob_oracle(q.probs, t), 1e-12));
                total += p;
            }
            CHECK_THAT(total, WithinAbs(1.0, 1e-12));
            double subset_total = 0.0;
            for (const auto& s : enumerate_subsets(n, k)) {
                subset_total += unordered_subset_prob(q, s);
            }
            CHECK_THAT(subset_total, WithinAbs(1.0, 1e-12));
        }
    }
}

TEST_CASE("unordered probability on a hand-computed case", "[selection]") {
    const auto q = RoutingDistribution::from_probs(Vector{0.5, 0.3, 0.2});
    // 0.5 * 0.3/0.5 + 0.3 * 0.5/0.7
    const IndexList s{0, 1};
    CHECK_THAT(unordered_subset_prob(q, s), WithinRel(0.3 + 0.15 / 0.7, 1e-14));
}

TEST_CASE("selection errors", "[selection]") {
    const auto q = RoutingDistribution::from_probs(Vector{0.5, 0.3, 0.2});
    const IndexList dup{0, 0};
    const IndexList out_of_range{3};
    CHECK_THROWS_AS(ordered_selection_logprob(q, dup), DomainError);
    CHECK_THROWS_AS(ordered_selection_logprob(q, out_of_range), DomainError);
    RngStream rng(1, "s", 0);
    CHECK_THROWS_AS(sample_without_replacement(q, 4, rng), DomainError);
    CHECK_THROWS_AS(sample_without_replacement(q, 0, rng), DomainError);
    CHECK_THROWS_AS(top_k(q, 0), DomainError);

    // Residual mass below the floor is rejected rather than divided by.
    const auto peaked = RoutingDistribution::from_logits(Vector{0.0, -40.0, -40.0});
    const IndexList first_then_rest{0, 1, 2};
    CHECK_THROWS_AS(ordered_selection_logprob(peaked, first_then_rest), DomainError);
}

TEST_CASE("sequential sampling reproduces unordered subset probabilities", "[sampling]") {
    RngStream setup(9, "setup", 0);
    const auto q = random_distribution(setup, 5);
    const std::size_t k = 2;
    const int trials = 200000;
    std::map<IndexList, int> counts;
    RngStream rng(9, "draws", 0);
    for (int t = 0; t < trials; ++t) {
        IndexList s = sample_without_replacement(q, k, rng);
        REQUIRE(s.size() == k);
        REQUIRE(s[0] != s[1]);
        std::sort(s.begin(), s.end());
        ++counts[s];
    }
    for (const auto& s : enumerate_subsets(5, k)) {
        const double p = unordered_subset_prob(q, s);
        const double sd = std::sqrt(p * (1.0 - p) / trials);
        CHECK(std::abs(counts[s] / static_cast<double>(trials) - p) < 5.0 * sd);
    }
}

TEST_CASE("sampling is deterministic per stream", "[sampling]") {
    const auto q = RoutingDistribution::from_probs(Vector{0.1, 0.2, 0.3, 0.4});
    RngStream a(4, "x", 1);
    RngStream b(4, "x", 1);
    for (int t = 0; t < 50; ++t) {
        CHECK(sample_without_replacement(q, 3, a) == sample_without_replacement(q, 3, b));
    }
}

TEST_CASE("top_k picks the largest and breaks ties toward lower indices", "[topk]") {
    const auto q = RoutingDistribution::from_probs(Vector{0.1, 0.3, 0.2, 0.3, 0.1});
    CHECK(top_k(q, 1) == IndexList{1});
    CHECK(top_k(q, 2) == IndexList{1, 3});
    CHECK(top_k(q, 3) == IndexList{1, 2, 3});
    CHECK(top_k(q, 4) == IndexList{0, 1, 2, 3});
}

TEST_CASE("route computes softmax of P x", "[route]") {
    const Matrix p(2, 2, {1.0, 0.0, 0.0, 1.0});
    const auto q = route(p, Vector{std::log(3.0), 0.0});
    CHECK_THAT(q.probs[0], WithinRel(0.75, 1e-15));
    CHECK_THROWS_AS(route(p, Vector{1.0}), ShapeError);
}

TEST_CASE("logit score gradient sums to zero over the final renormalization", "[score]") {
    RngStream rng(6, "score", 0);
    for (int t = 0; t < 50; ++t) {
        const auto q = random_distribution(rng, 5);
        const IndexList sel{3, 0, 4};
        const Vector g = selection_logit_grad(q, sel);
        // log Q is invariant under adding a constant to every logit.
        double s = 0.0;
        for (double v : g) {
            s += v;
        }
        CHECK_THAT(s, WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("router score gradient matches finite differences", "[score]") {
    RngStream rng(8, "score-fd", 0);
    for (int t = 0; t < 30; ++t) {
        const std::size_t n = 2 + rng.below(4);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(3, n));
        const std::size_t d = 1 + rng.below(4);
        const Matrix p = gaussian_matrix(rng, n, d, 1.0);
        Vector x(d);
        for (double& v : x) {
            v = rng.normal();
        }
        const auto q = route(p, x);
        IndexList all(n);
        for (std::size_t i = 0; i < n; ++i) {
            all[i] = i;
        }
        for (std::size_t i = n; i > 1; --i) {
            std::swap(all[i - 1], all[rng.below(i)]);
        }
        const IndexList sel(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
        const Matrix g = selection_score_grad(q, x, sel);
        auto f = [&](const Vector& flat) {
            return ordered_selection_logprob(route(Matrix(n, d, flat), x), sel);
        };
        const Vector fd = finite_diff_grad(f, p.storage(), 1e-6);
        for (std::size_t i = 0; i < fd.size(); ++i) {
            CHECK_THAT(g.storage()[i], WithinAbs(fd[i], 1e-6 * std::max(1.0, std::abs(fd[i]))));
        }
    }
}

TEST_CASE("enumerations have the right sizes and order", "[enumerate]") {
    CHECK(enumerate_ordered_tuples(4, 2).size() == 12);
    CHECK(enumerate_ordered_tuples(4, 2).front() == IndexList{0, 1});
    CHECK(enumerate_subsets(5, 3).size() == 10);
    CHECK(enumerate_subsets(5, 3).back() == IndexList{2, 3, 4});
}
