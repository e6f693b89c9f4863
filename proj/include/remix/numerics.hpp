// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit linear algebra and Gaussian special functions. Everything here
// is a pure function over its inputs; Matrix is a plain value type.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "remix/rng.hpp"

namespace remix {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    /// Takes ownership of row-major data; throws ShapeError if the size disagrees.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& storage() const { return data_; }

    void fill(double v);
    bool all_finite() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// m * v. Throws ShapeError when m.cols() != v.size().
Vector matvec(const Matrix& m, std::span<const double> v);

/// transpose(m) * v. Throws ShapeError when m.rows() != v.size().
Vector matvec_transposed(const Matrix& m, std::span<const double> v);

/// m += scale * u * transpose(v).
void add_outer(Matrix& m, double scale, std::span<const double> u, std::span<const double> v);

/// m += scale * other (same shape).
void add_scaled(Matrix& m, double scale, const Matrix& other);

Matrix outer(std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> v);
double frobenius_norm(const Matrix& m);

/// Numerically stable softmax (max-subtraction). Throws DomainError on empty
/// input or a non-finite logit.
Vector softmax(std::span<const double> logits);

/// log(sum(exp(v))) with max-subtraction.
double log_sum_exp(std::span<const double> v);

/// rows x cols matrix with i.i.d. N(0, sigma^2) entries drawn from rng in
/// row-major order. Throws DomainError when sigma <= 0.
Matrix gaussian_matrix(RngStream& rng, std::size_t rows, std::size_t cols, double sigma);

double std_normal_pdf(double z);
/// Phi(z), computed from erfc so both tails keep full relative precision.
double std_normal_cdf(double z);
/// 1 - Phi(z) without cancellation.
double std_normal_sf(double z);
/// Phi^{-1}(p) for p in (0, 1): rational initial guess refined by Newton steps.
double std_normal_quantile(double p);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x, double h);

}  // namespace remix
