// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace remix {

struct QuadratureResult {
    double value = 0.0;
    /// Sum of per-interval |Kronrod - Gauss| estimates plus any truncated tail bound.
    double error_bound = 0.0;
    std::size_t intervals = 0;
    /// Upper integration limit actually used when the requested one was +inf.
    double truncated_at = 0.0;
};

struct QuadratureOptions {
    std::size_t max_intervals = 20000;
    /// Required when the upper limit is +inf: a constant c with |f(z)| <= c * phi(z)
    /// for every z beyond the lower limit, phi being the standard normal density.
    /// The range is cut at the first z >= max(a, 1) where c * phi(z) / z < tol / 10.
    std::optional<double> gaussian_envelope;
};

/// Globally adaptive 7/15-point Gauss-Kronrod quadrature of f over [a, b].
///
/// The interval with the largest error estimate is bisected until the
/// accumulated estimate drops below tol. b may be +infinity when
/// options.gaussian_envelope is set. Throws NumericalError when the interval
/// budget runs out, DomainError on bad arguments.
QuadratureResult quadrature(const std::function<double(double)>& f, double a, double b, double tol,
                            const QuadratureOptions& options = {});

}  // namespace remix
