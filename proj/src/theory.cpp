// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "remix/errors.hpp"
#include "remix/numerics.hpp"
#include "remix/parallel.hpp"
#include "remix/quadrature.hpp"
#include "remix/routing.hpp"

namespace remix {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kMonteCarloChunks = 64;

double sqrt_pi_over_4_sqrt2() {
    return std::sqrt(kPi) / (4.0 * std::numbers::sqrt2);
}

// (3/2) sqrt(pi / ln 3)
double lemma6_constant() {
    return 1.5 * std::sqrt(kPi / std::log(3.0));
}

// Phi(z + a) - Phi(z), via upper tails for z >= 0 to avoid cancellation.
double gaussian_gap(double z, double a) {
    if (z >= 0.0) {
        return std_normal_sf(z) - std_normal_sf(z + a);
    }
    return std_normal_cdf(z + a) - std_normal_cdf(z);
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return out;
}

std::vector<double> logspace(double lo, double hi, std::size_t count) {
    std::vector<double> out(count);
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    }
    out.back() = hi;
    return out;
}

std::string join(const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(6);
    os << "{";
    for (std::size_t i = 0; i < v.size(); ++i) {
        os << (i ? "," : "") << v[i];
    }
    os << "}";
    return os.str();
}

std::string range_of(const std::vector<double>& v) {
    if (v.empty()) {
        return "{}";
    }
    std::ostringstream os;
    os.precision(6);
    os << "[" << v.front() << "," << v.back() << "] (" << v.size() << " points)";
    return os.str();
}

double integer_bound_lhs(std::size_t n) {
    const double nd = static_cast<double>(n);
    const double beta = nd / 2.0 - 1.0;
    const double tail = 1.0 - std::exp(-beta + std::log(beta + 1.0));
    return std::numbers::sqrt2 / ((nd - 2.0) * (nd - 2.0)) *
           (std::sqrt(std::log(nd - 2.0)) * tail + sqrt_pi_over_4_sqrt2());
}

double integer_bound_rhs(std::size_t n) {
    const double nd = static_cast<double>(n);
    return lemma6_constant() * std::sqrt(std::log(nd)) / (nd * (nd - 1.0));
}

}  // namespace

void BoundInputs::validate() const {
    if (!(sigma > 0.0) || !(x_norm > 0.0) || n < 2 || !(delta > 0.0 && delta < 1.0)) {
        throw DomainError("BoundInputs: need sigma > 0, x_norm > 0, n >= 2, 0 < delta < 1");
    }
}

double collapse_bound_denominator(std::size_t n) {
    const double nd = static_cast<double>(n);
    const double main = 1.5 * std::sqrt(kPi / std::log(3.0) * std::log(nd));
    const double tail = 1.0 / (std::sqrt(2.0 * kPi) * std::exp2(nd - std::log2(nd) - 1.0));
    return main + tail;
}

double ess_upper_bound(const BoundInputs& b) {
    b.validate();
    const double exponent =
        b.delta * b.sigma * b.x_norm / collapse_bound_denominator(b.n) - std::log(static_cast<double>(b.n) - 1.0);
    const double base = 1.0 + std::exp(-exponent);
    return base * base;
}

double EssSamples::quantile(double p) const {
    if (sorted.empty()) {
        throw DomainError("EssSamples::quantile: no samples");
    }
    const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double EssSamples::fraction_above(double threshold) const {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), threshold);
    return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

EssSamples monte_carlo_ess(double sigma, std::size_t n, std::size_t dim, std::size_t trials, std::uint64_t seed,
                           std::size_t threads) {
    if (n < 1 || dim < 1 || trials < 1) {
        throw DomainError("monte_carlo_ess: n, dim and trials must be positive");
    }
    EssSamples out;
    out.sigma = sigma;
    out.n = n;
    out.dim = dim;
    Vector x(dim);
    {
        RngStream rng(seed, "mc-ess-x", 0);
        for (double& v : x) {
            v = rng.rademacher();
        }
    }
    out.x_norm = std::sqrt(squared_norm(x));
    out.samples.assign(trials, 0.0);
    for_each_chunk(trials, kMonteCarloChunks, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            RngStream rng(seed, "mc-ess", t);
            const Matrix p = gaussian_matrix(rng, n, dim, sigma);
            out.samples[t] = ess(softmax(matvec(p, x)));
        }
    });
    out.sorted = out.samples;
    std::sort(out.sorted.begin(), out.sorted.end());
    return out;
}

std::string_view to_string(LemmaId id) {
    switch (id) {
        case LemmaId::L0: return "L0";
        case LemmaId::L1: return "L1";
        case LemmaId::L2: return "L2";
        case LemmaId::L3: return "L3";
        case LemmaId::L4: return "L4";
        case LemmaId::L5: return "L5";
        case LemmaId::L6: return "L6";
    }
    return "?";
}

LemmaId parse_lemma_id(std::string_view s) {
    for (LemmaId id : kAllLemmas) {
        if (to_string(id) == s) {
            return id;
        }
    }
    throw DomainError("unknown lemma id '" + std::string(s) + "'");
}

LemmaGrid default_lemma_grid(LemmaId id) {
    LemmaGrid g;
    switch (id) {
        case LemmaId::L0:
            g.z = linspace(-6.0, 6.0, 241);
            g.alpha = {0.01, 0.1, 1.0, 5.0};
            break;
        case LemmaId::L1:
            g.z = linspace(0.0, 6.0, 121);
            g.alpha = {0.01, 0.1, 1.0, 5.0};
            break;
        case LemmaId::L2:
            g.alpha = {0.5, 1.0, 2.0};
            g.beta = {0.5, 1.0, 2.0};
            break;
        case LemmaId::L3:
            g.alpha = {1.0, 2.0, 8.0, 32.0};
            g.beta = {1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 3.0 / 4, 1.0};
            break;
        case LemmaId::L4:
            g.v = logspace(0.001, 0.5, 40);
            break;
        case LemmaId::L5:
        case LemmaId::L6:
            for (std::size_t n = 3; n <= 64; ++n) {
                g.n.push_back(n);
            }
            break;
    }
    return g;
}

std::string describe_grid(LemmaId id, const LemmaGrid& g) {
    std::ostringstream os;
    switch (id) {
        case LemmaId::L0:
        case LemmaId::L1:
            os << "z in " << range_of(g.z) << "; alpha in " << join(g.alpha);
            break;
        case LemmaId::L2:
            os << "identity at (alpha, beta) in " << join(g.alpha) << " x " << join(g.beta)
               << " plus int_0^1 t sqrt(ln 1/t) dt = sqrt(pi)/(4 sqrt 2)";
            break;
        case LemmaId::L3:
            os << "alpha in " << join(g.alpha) << "; beta = alpha * " << join(g.beta);
            break;
        case LemmaId::L4:
            os << "v log-spaced in " << range_of(g.v);
            break;
        case LemmaId::L5:
        case LemmaId::L6:
            os << "integer n in [" << (g.n.empty() ? 0 : g.n.front()) << "," << (g.n.empty() ? 0 : g.n.back())
               << "]";
            break;
    }
    if (g.sabotage) {
        os << " [sabotaged]";
    }
    return os.str();
}

double gamma_integral_by_quadrature(double alpha, double beta, double tol) {
    if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw DomainError("gamma integral needs alpha, beta > 0");
    }
    // Split at 1/2. On [0, 1/2] substitute t = u^4 to tame t^(alpha-1); on [1/2, 1]
    // substitute t = 1 - u^2 so (ln 1/t)^(beta-1) ~ u^(2 beta - 2) is cancelled by dt = 2u du.
    const double left_end = std::pow(0.5, 0.25);
    auto left = [&](double u) {
        if (u <= 0.0) {
            return 0.0;
        }
        const double t = u * u * u * u;
        return std::pow(t, alpha - 1.0) * std::pow(-std::log(t), beta - 1.0) * 4.0 * u * u * u;
    };
    auto right = [&](double u) {
        if (u <= 0.0) {
            return 0.0;
        }
        const double s = u * u;
        const double t = 1.0 - s;
        return std::pow(t, alpha - 1.0) * std::pow(-std::log1p(-s), beta - 1.0) * 2.0 * u;
    };
    const double a = quadrature(left, 0.0, left_end, tol / 2.0).value;
    const double b = quadrature(right, 0.0, std::sqrt(0.5), tol / 2.0).value;
    return a + b;
}

double gaussian_order_integral(std::size_t n, double tol) {
    QuadratureOptions opts;
    opts.gaussian_envelope = 1.0 / std::sqrt(2.0 * kPi);
    const double power = static_cast<double>(n) - 2.0;
    auto f = [&](double z) {
        const double pdf = std_normal_pdf(z);
        return std::pow(std_normal_cdf(z), power) * pdf * pdf;
    };
    return quadrature(f, 0.0, std::numeric_limits<double>::infinity(), tol, opts).value;
}

LemmaReport verify_lemma(LemmaId id, const LemmaGrid& grid) {
    LemmaReport report;
    report.id = std::string(to_string(id));
    report.grid = describe_grid(id, grid);
    double worst = std::numeric_limits<double>::infinity();
    auto record = [&](double bound, double value) {
        const double margin = grid.sabotage ? value - bound : bound - value;
        worst = std::min(worst, margin);
        ++report.points;
    };
    auto record_identity = [&](double lhs, double rhs) {
        const double margin = grid.sabotage ? std::abs(lhs - rhs) - 1.0 : -std::abs(lhs - rhs);
        worst = std::min(worst, margin);
        ++report.points;
    };

    switch (id) {
        case LemmaId::L0:
            for (double a : grid.alpha) {
                for (double z : grid.z) {
                    record(a / std::sqrt(2.0 * kPi), gaussian_gap(z, a));
                }
            }
            break;
        case LemmaId::L1:
            for (double a : grid.alpha) {
                const double middle_factor = std::sqrt(2.0 * kPi) * (std_normal_cdf(a) - 0.5);
                for (double z : grid.z) {
                    const double gap = gaussian_gap(z, a);
                    const double middle = middle_factor * std_normal_pdf(z);
                    record(middle, gap);
                    record(a * std_normal_pdf(z), middle);
                }
            }
            break;
        case LemmaId::L2:
            record_identity(gamma_integral_by_quadrature(2.0, 1.5, grid.quadrature_tol), sqrt_pi_over_4_sqrt2());
            for (double a : grid.alpha) {
                for (double b : grid.beta) {
                    record_identity(gamma_integral_by_quadrature(a, b, grid.quadrature_tol),
                                    std::tgamma(b) / std::pow(a, b));
                }
            }
            break;
        case LemmaId::L3:
            for (double a : grid.alpha) {
                for (double frac : grid.beta) {
                    const double b = a * frac;
                    auto f = [a](double t) {
                        if (t <= 0.0) {
                            return 0.0;
                        }
                        return t * std::exp(-t) * std::sqrt(std::max(0.0, std::log(a / t)));
                    };
                    const double value = quadrature(f, 0.0, b, grid.quadrature_tol).value;
                    const double bound =
                        std::sqrt(std::log(a)) * (1.0 - std::exp(-b + std::log(b + 1.0))) + sqrt_pi_over_4_sqrt2();
                    record(bound, value);
                }
            }
            break;
        case LemmaId::L4:
            for (double v : grid.v) {
                // Phi^{-1}(1 - v) = -Phi^{-1}(v) keeps full precision for small v.
                const double z = -std_normal_quantile(v);
                record(v * std::sqrt(2.0 * std::log(1.0 / v)), std_normal_pdf(z));
            }
            break;
        case LemmaId::L5:
            for (std::size_t n : grid.n) {
                record(integer_bound_rhs(n), integer_bound_lhs(n));
            }
            break;
        case LemmaId::L6:
            for (std::size_t n : grid.n) {
                record(integer_bound_rhs(n), gaussian_order_integral(n, grid.quadrature_tol));
            }
            break;
    }
    report.worst_margin = report.points == 0 ? 0.0 : worst;
    report.pass = report.points > 0 && report.worst_margin >= -kLemmaTolerance;
    return report;
}

TopkReport check_topk_optimality(std::size_t n, std::size_t k, std::size_t trials, std::uint64_t seed) {
    if (n > 8 || k > 4 || k < 1 || k > n) {
        throw DomainError("check_topk_optimality: need 1 <= k <= min(n, 4), n <= 8");
    }
    TopkReport report{n, k, trials, 0, 0};
    const auto subsets = enumerate_subsets(n, k);
    for (std::size_t t = 0; t < trials; ++t) {
        RngStream rng(seed, "topk", t);
        Vector logits(n);
        for (double& v : logits) {
            v = rng.normal();
        }
        const auto q = RoutingDistribution::from_logits(std::move(logits));
        const IndexList best = top_k(q, k);
        bool decisive = false;
        for (const auto& s : subsets) {
            if (unordered_subset_prob(q, s) > 0.5) {
                decisive = true;
                if (s != best) {
                    ++report.violations;
                }
            }
        }
        report.decisive += decisive ? 1 : 0;
    }
    return report;
}

SwapReport check_swap_lemma(std::size_t n, std::size_t k, std::size_t trials, std::uint64_t seed) {
    if (n > 8 || k > 4 || k < 1 || k >= n) {
        throw DomainError("check_swap_lemma: need 1 <= k < n, n <= 8, k <= 4");
    }
    SwapReport report{n, k, trials, 0, std::numeric_limits<double>::infinity()};
    const auto subsets = enumerate_subsets(n, k);
    for (std::size_t t = 0; t < trials; ++t) {
        RngStream rng(seed, "swap", t);
        Vector logits(n);
        for (double& v : logits) {
            v = rng.normal();
        }
        const auto q = RoutingDistribution::from_logits(std::move(logits));
        IndexList subset = subsets[rng.below(subsets.size())];
        IndexList outside;
        for (std::size_t i = 0; i < n; ++i) {
            if (std::find(subset.begin(), subset.end(), i) == subset.end()) {
                outside.push_back(i);
            }
        }
        const std::size_t pos = rng.below(subset.size());
        std::size_t removed = subset[pos];
        std::size_t added = outside[rng.below(outside.size())];
        if (q.probs[removed] > q.probs[added]) {
            // Start from the swapped subset instead so the removed index has the smaller weight.
            subset[pos] = added;
            std::swap(removed, added);
        }
        const double before = unordered_subset_prob(q, subset);
        IndexList swapped = subset;
        std::replace(swapped.begin(), swapped.end(), removed, added);
        const double after = unordered_subset_prob(q, swapped);
        const double gain = after - before;
        report.worst_gain = std::min(report.worst_gain, gain);
        if (gain < -kSwapTolerance) {
            ++report.violations;
        }
    }
    return report;
}

}  // namespace remix
