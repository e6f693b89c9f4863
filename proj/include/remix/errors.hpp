// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception types shared by every module. Callers that need to map failures
// onto exit codes (the CLI) catch these by category.

#pragma once

#include <stdexcept>
#include <string>

namespace remix {

/// Operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An argument is outside the domain of the operation (k > n, sigma <= 0, NaN logits, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Routing mass left after earlier draws fell below kResidualFloor.
class DegenerateResidualError : public DomainError {
public:
    using DomainError::DomainError;
};

/// A numerical procedure could not deliver a result within its budget.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A checkpoint or config document is malformed or inconsistent.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace remix
