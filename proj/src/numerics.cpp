// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "remix/errors.hpp"

namespace remix {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

void Matrix::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Vector matvec(const Matrix& m, std::span<const double> v) {
    if (m.cols() != v.size()) {
        throw ShapeError("matvec: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " but vector has dim " + std::to_string(v.size()));
    }
    Vector out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) {
            acc += row[c] * v[c];
        }
        out[r] = acc;
    }
    return out;
}

Vector matvec_transposed(const Matrix& m, std::span<const double> v) {
    if (m.rows() != v.size()) {
        throw ShapeError("matvec_transposed: matrix has " + std::to_string(m.rows()) +
                         " rows but vector has dim " + std::to_string(v.size()));
    }
    Vector out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        const double s = v[r];
        for (std::size_t c = 0; c < row.size(); ++c) {
            out[c] += row[c] * s;
        }
    }
    return out;
}

void add_outer(Matrix& m, double scale, std::span<const double> u, std::span<const double> v) {
    if (m.rows() != u.size() || m.cols() != v.size()) {
        throw ShapeError("add_outer: shape mismatch");
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double s = scale * u[r];
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += s * v[c];
        }
    }
}

void add_scaled(Matrix& m, double scale, const Matrix& other) {
    if (m.rows() != other.rows() || m.cols() != other.cols()) {
        throw ShapeError("add_scaled: shape mismatch");
    }
    auto dst = m.data();
    const auto src = other.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += scale * src[i];
    }
}

Matrix outer(std::span<const double> u, std::span<const double> v) {
    Matrix m(u.size(), v.size());
    add_outer(m, 1.0, u, v);
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double squared_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) {
        acc += x * x;
    }
    return acc;
}

double frobenius_norm(const Matrix& m) {
    return std::sqrt(squared_norm(m.data()));
}

Vector softmax(std::span<const double> logits) {
    if (logits.empty()) {
        throw DomainError("softmax: empty logits");
    }
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        if (!std::isfinite(v)) {
            throw DomainError("softmax: non-finite logit");
        }
        peak = std::max(peak, v);
    }
    Vector out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) {
        return -std::numeric_limits<double>::infinity();
    }
    const double peak = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (double x : v) {
        total += std::exp(x - peak);
    }
    return peak + std::log(total);
}

Matrix gaussian_matrix(RngStream& rng, std::size_t rows, std::size_t cols, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError("gaussian_matrix: sigma must be positive and finite");
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = sigma * rng.normal();
    }
    return m;
}

double std_normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double std_normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double std_normal_sf(double z) {
    return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("std_normal_quantile: p must lie in (0, 1)");
    }
    if (p > 0.5) {
        return -std_normal_quantile(1.0 - p);
    }
    // Acklam's rational approximation for the lower half, ~1e-9 relative.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    double z;
    if (p < 0.02425) {
        const double q = std::sqrt(-2.0 * std::log(p));
        z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = p - 0.5;
        const double r = q * q;
        z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    // Halley refinement against the erfc-based cdf.
    for (int it = 0; it < 3; ++it) {
        const double e = std_normal_cdf(z) - p;
        const double u = e / std_normal_pdf(z);
        z -= u / (1.0 + 0.5 * z * u);
    }
    return z;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    if (!(h > 0.0)) {
        throw DomainError("finite_diff_grad: step must be positive");
    }
    Vector grad(x.size());
    Vector probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace remix
