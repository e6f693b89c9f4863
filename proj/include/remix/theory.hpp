// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Numerical checks for the routing-collapse bound, the Gaussian lemmas it
// rests on, and the optimality of top-k inference. Nothing here proves
// anything; each check evaluates both sides of an inequality on a grid or
// enumerates a finite space exhaustively.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace remix {

struct BoundInputs {
    double sigma = 1.0;
    std::size_t n = 8;
    double x_norm = 1.0;
    double delta = 0.5;

    /// Throws DomainError unless sigma, x_norm > 0, n >= 2, delta in (0, 1).
    void validate() const;
};

/// Denominator of the collapse bound's exponent:
/// (3/2) sqrt(pi / ln 3 * ln n) + 1 / (sqrt(2 pi) 2^(n - log2 n - 1)).
double collapse_bound_denominator(std::size_t n);

/// With probability >= 1 - delta over a Gaussian router, ESS(softmax(P x)) is at most
/// (1 + exp(-(delta sigma |x| / denominator - ln(n - 1))))^2.
double ess_upper_bound(const BoundInputs& b);

struct EssSamples {
    double sigma = 0.0;
    std::size_t n = 0;
    std::size_t dim = 0;
    double x_norm = 0.0;
    /// In trial order.
    std::vector<double> samples;
    std::vector<double> sorted;

    /// Empirical quantile with linear interpolation between order statistics.
    double quantile(double p) const;
    double median() const { return quantile(0.5); }
    /// Fraction of samples strictly greater than threshold.
    double fraction_above(double threshold) const;
};

/// Per trial: P ~ N(0, sigma^2)^{n x dim} from RngStream(seed, "mc-ess", trial);
/// x is one Rademacher vector from RngStream(seed, "mc-ess-x", 0) shared by all
/// trials, so |x| = sqrt(dim). Records ess(softmax(P x)).
EssSamples monte_carlo_ess(double sigma, std::size_t n, std::size_t dim, std::size_t trials, std::uint64_t seed,
                           std::size_t threads = 1);

enum class LemmaId { L0, L1, L2, L3, L4, L5, L6 };

std::string_view to_string(LemmaId id);
LemmaId parse_lemma_id(std::string_view s);
inline constexpr LemmaId kAllLemmas[] = {LemmaId::L0, LemmaId::L1, LemmaId::L2, LemmaId::L3,
                                         LemmaId::L4, LemmaId::L5, LemmaId::L6};

/// Evaluation points. Only the fields a lemma reads matter for it.
struct LemmaGrid {
    std::vector<double> z;       // L0, L1
    std::vector<double> alpha;   // L0, L1, L2, L3
    std::vector<double> beta;    // L2; for L3, fractions of alpha in (0, 1]
    std::vector<double> v;       // L4
    std::vector<std::size_t> n;  // L5, L6
    double quadrature_tol = 1e-12;
    /// Test hook: evaluates (value - bound) instead of (bound - value).
    bool sabotage = false;
};

/// The documented default grid for a lemma.
LemmaGrid default_lemma_grid(LemmaId id);
std::string describe_grid(LemmaId id, const LemmaGrid& grid);

inline constexpr double kLemmaTolerance = 1e-9;

struct LemmaReport {
    std::string id;
    std::string grid;
    /// min over grid points of (bound - value); identities use -|lhs - rhs|.
    double worst_margin = 0.0;
    std::size_t points = 0;
    bool pass = false;
};

/// Throws NumericalError if a quadrature does not converge.
LemmaReport verify_lemma(LemmaId id, const LemmaGrid& grid);

/// Quadrature value of int_0^1 t^(alpha-1) (ln 1/t)^(beta-1) dt.
double gamma_integral_by_quadrature(double alpha, double beta, double tol);

/// Quadrature value of int_0^inf Phi(z)^(n-2) phi(z)^2 dz.
double gaussian_order_integral(std::size_t n, double tol);

struct TopkReport {
    std::size_t n = 0;
    std::size_t k = 0;
    std::size_t trials = 0;
    /// Trials in which some subset had unordered probability above 1/2.
    std::size_t decisive = 0;
    std::size_t violations = 0;
};

/// Random q = softmax(N(0, 1) logits) per trial from RngStream(seed, "topk", trial).
/// Whenever a subset's unordered probability exceeds 1/2, it must equal top_k(q, k).
TopkReport check_topk_optimality(std::size_t n, std::size_t k, std::size_t trials, std::uint64_t seed);

struct SwapReport {
    std::size_t n = 0;
    std::size_t k = 0;
    std::size_t trials = 0;
    std::size_t violations = 0;
    /// Smallest observed Qbar(swapped) - Qbar(original).
    double worst_gain = 0.0;
};

inline constexpr double kSwapTolerance = 1e-12;

/// Per trial: random q, subset I, i in I and j outside with q_i <= q_j
/// (roles exchanged when the draw comes out the other way); the unordered
/// probability must not drop by more than kSwapTolerance after swapping i for j.
SwapReport check_swap_lemma(std::size_t n, std::size_t k, std::size_t trials, std::uint64_t seed);

}  // namespace remix
