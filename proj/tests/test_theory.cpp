// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>

#include "remix/errors.hpp"
#include "remix/theory.hpp"

using namespace remix;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

// Reference values below come from an independent 30-digit evaluation.

TEST_CASE("collapse bound at the reference instance", "[bound]") {
    CHECK_THAT(collapse_bound_denominator(8), WithinRel(3.6827117536822345, 1e-14));
    CHECK_THAT(ess_upper_bound({1.0, 8, 32.0, 0.05}), WithinRel(30.61728548224677, 1e-13));
    CHECK_THAT(ess_upper_bound({1.0, 8, 32.0, 0.1581}), WithinRel(7.6842886018373364, 1e-13));
    CHECK_THAT(ess_upper_bound({1.0, 8, 32.0, 0.5}), WithinRel(1.1899202393779964, 1e-13));
}

TEST_CASE("collapse bound shrinks with delta, sigma and |x|", "[bound]") {
    CHECK(ess_upper_bound({1.0, 8, 32.0, 0.3}) < ess_upper_bound({1.0, 8, 32.0, 0.2}));
    CHECK(ess_upper_bound({2.0, 8, 32.0, 0.2}) < ess_upper_bound({1.0, 8, 32.0, 0.2}));
    CHECK(ess_upper_bound({1.0, 8, 64.0, 0.2}) < ess_upper_bound({1.0, 8, 32.0, 0.2}));
    CHECK(ess_upper_bound({1.0, 8, 1e6, 0.5}) >= 1.0);
}

TEST_CASE("bound inputs are validated", "[bound]") {
    CHECK_THROWS_AS(ess_upper_bound({0.0, 8, 1.0, 0.5}), DomainError);
    CHECK_THROWS_AS(ess_upper_bound({1.0, 1, 1.0, 0.5}), DomainError);
    CHECK_THROWS_AS(ess_upper_bound({1.0, 8, 1.0, 1.0}), DomainError);
    CHECK_THROWS_AS(ess_upper_bound({1.0, 8, -1.0, 0.5}), DomainError);
}

TEST_CASE("monte carlo ess is reproducible across thread counts", "[mc]") {
    const auto a = monte_carlo_ess(1.0, 8, 64, 3000, 5, 1);
    const auto b = monte_carlo_ess(1.0, 8, 64, 3000, 5, 3);
    CHECK(a.samples == b.samples);
    CHECK(a.x_norm == 8.0);
    for (double e : a.samples) {
        CHECK(e >= 1.0);
        CHECK(e <= 8.0 + 1e-12);
    }
}

TEST_CASE("empirical quantiles", "[mc]") {
    EssSamples s;
    s.sorted = {1.0, 2.0, 3.0, 4.0};
    s.samples = s.sorted;
    CHECK(s.median() == 2.5);
    CHECK(s.quantile(0.0) == 1.0);
    CHECK(s.quantile(1.0) == 4.0);
    CHECK(s.fraction_above(2.0) == 0.5);
    CHECK(s.fraction_above(4.0) == 0.0);
}

TEST_CASE("gaussian order integral", "[integral]") {
    CHECK_THAT(gaussian_order_integral(3, 1e-13), WithinRel(0.098156755345107233, 1e-10));
    CHECK_THAT(gaussian_order_integral(8, 1e-13), WithinRel(0.024986049943277854, 1e-10));
    CHECK_THAT(gaussian_order_integral(64, 1e-13), WithinRel(0.00058128310145819443, 1e-9));
}

TEST_CASE("gamma-type integral", "[integral]") {
    CHECK_THAT(gamma_integral_by_quadrature(2.0, 1.5, 1e-12), WithinAbs(0.31332853432887506, 1e-10));
    CHECK_THAT(gamma_integral_by_quadrature(0.5, 0.5, 1e-12), WithinRel(2.5066282746310005, 1e-10));
    CHECK_THAT(gamma_integral_by_quadrature(1.0, 2.0, 1e-12), WithinRel(1.0, 1e-12));
    CHECK_THROWS_AS(gamma_integral_by_quadrature(0.0, 1.0, 1e-12), DomainError);
}

TEST_CASE("every lemma passes its default grid", "[lemmas]") {
    for (LemmaId id : kAllLemmas) {
        const LemmaReport r = verify_lemma(id, default_lemma_grid(id));
        INFO(r.id << " worst margin " << r.worst_margin);
        CHECK(r.pass);
        CHECK(r.points > 0);
        CHECK(r.worst_margin >= -kLemmaTolerance);
        CHECK(!r.grid.empty());
    }
}

TEST_CASE("sabotage flips a lemma to failing", "[lemmas]") {
    for (LemmaId id : {LemmaId::L0, LemmaId::L2, LemmaId::L6}) {
        LemmaGrid g = default_lemma_grid(id);
        g.sabotage = true;
        CHECK_FALSE(verify_lemma(id, g).pass);
    }
}

TEST_CASE("lemma ids parse and print", "[lemmas]") {
    CHECK(to_string(LemmaId::L4) == "L4");
    CHECK(parse_lemma_id("L6") == LemmaId::L6);
    CHECK_THROWS_AS(parse_lemma_id("L7"), DomainError);
}

TEST_CASE("top-k optimality and swap monotonicity on small pools", "[theorem]") {
    for (std::size_t n = 3; n <= 5; ++n) {
        for (std::size_t k = 1; k < n && k <= 3; ++k) {
            const TopkReport t = check_topk_optimality(n, k, 500, 7);
            CHECK(t.violations == 0);
            CHECK(t.trials == 500);
            const SwapReport s = check_swap_lemma(n, k, 500, 7);
            CHECK(s.violations == 0);
            CHECK(s.worst_gain >= -kSwapTolerance);
        }
    }
    CHECK_THROWS_AS(check_swap_lemma(3, 3, 10, 1), DomainError);
    CHECK_THROWS_AS(check_topk_optimality(9, 2, 10, 1), DomainError);
}
