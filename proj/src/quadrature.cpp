// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>
#include <vector>

#include "remix/errors.hpp"
#include "remix/numerics.hpp"

namespace remix {

namespace {

// Kronrod abscissae (descending), Kronrod weights, and the embedded 7-point Gauss weights
// for the odd-indexed abscissae.
constexpr double kNodes[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                              0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                              0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                              0.207784955007898467600689403773245, 0.0};
constexpr double kKronrod[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kGauss[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                              0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double lo;
    double hi;
    double value;
    double error;
    bool operator<(const Segment& other) const { return error < other.error; }
};

Segment gauss_kronrod(const std::function<double(double)>& f, double lo, double hi) {
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const double fc = f(mid);
    double kronrod = kKronrod[7] * fc;
    double gauss = kGauss[3] * fc;
    for (int i = 0; i < 7; ++i) {
        const double dx = half * kNodes[i];
        const double pair = f(mid - dx) + f(mid + dx);
        kronrod += kKronrod[i] * pair;
        if (i % 2 == 1) {
            gauss += kGauss[i / 2] * pair;
        }
    }
    kronrod *= half;
    gauss *= half;
    if (!std::isfinite(kronrod)) {
        throw NumericalError("quadrature: integrand produced a non-finite value on [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "]");
    }
    return {lo, hi, kronrod, std::abs(kronrod - gauss)};
}

double gaussian_cutoff(double a, double envelope, double tol) {
    double z = std::max(a, 1.0);
    while (envelope * std_normal_pdf(z) / z >= tol / 10.0) {
        z += 0.25;
        if (z > 40.0) {
            throw NumericalError("quadrature: Gaussian tail cutoff not reached before z = 40");
        }
    }
    return z;
}

}  // namespace

QuadratureResult quadrature(const std::function<double(double)>& f, double a, double b, double tol,
                            const QuadratureOptions& options) {
    if (!(tol > 0.0)) {
        throw DomainError("quadrature: tol must be positive");
    }
    if (!std::isfinite(a) || std::isnan(b) || b < a) {
        throw DomainError("quadrature: need finite a <= b");
    }

    QuadratureResult result;
    double budget = tol;
    double upper = b;
    if (std::isinf(b)) {
        if (!options.gaussian_envelope || !(*options.gaussian_envelope > 0.0)) {
            throw DomainError("quadrature: an infinite upper limit needs a positive gaussian_envelope");
        }
        upper = gaussian_cutoff(a, *options.gaussian_envelope, tol);
        const double tail = *options.gaussian_envelope * std_normal_pdf(upper) / upper;
        result.error_bound += tail;
        budget = tol - tail;
    }
    result.truncated_at = upper;
    if (upper == a) {
        return result;
    }

    std::priority_queue<Segment> heap;
    Segment first = gauss_kronrod(f, a, upper);
    double total_value = first.value;
    double total_error = first.error;
    heap.push(first);

    while (total_error > budget) {
        if (heap.size() >= options.max_intervals) {
            throw NumericalError("quadrature: no convergence within " + std::to_string(options.max_intervals) +
                                 " intervals (error estimate " + std::to_string(total_error) + ", tol " +
                                 std::to_string(tol) + ")");
        }
        const Segment worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.lo + worst.hi);
        if (!(mid > worst.lo && mid < worst.hi)) {
            throw NumericalError("quadrature: interval width reached machine resolution near " +
                                 std::to_string(worst.lo));
        }
        const Segment left = gauss_kronrod(f, worst.lo, mid);
        const Segment right = gauss_kronrod(f, mid, worst.hi);
        total_value += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum from the leaves so the running update's rounding does not leak into the value.
    std::vector<Segment> leaves;
    leaves.reserve(heap.size());
    while (!heap.empty()) {
        leaves.push_back(heap.top());
        heap.pop();
    }
    std::sort(leaves.begin(), leaves.end(), [](const Segment& x, const Segment& y) { return x.lo < y.lo; });
    double value = 0.0;
    double error = 0.0;
    for (const auto& s : leaves) {
        value += s.value;
        error += s.error;
    }
    result.value = value;
    result.error_bound += error;
    result.intervals = leaves.size();
    return result;
}

}  // namespace remix
