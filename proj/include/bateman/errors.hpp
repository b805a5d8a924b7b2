#pragma once

#include <stdexcept>
#include <string>

namespace bateman {

/// Base of every recoverable numerical failure. Grid sweeps catch this type
/// and count the sample as singular instead of aborting.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A jet operation hit a point outside its domain (division by zero value,
/// log or sqrt of a non-positive value, non-finite result).
class SingularityError : public NumericalError {
public:
    SingularityError(std::string op, double value);

    const std::string& op() const noexcept { return op_; }
    double value() const noexcept { return value_; }

private:
    std::string op_;
    double value_;
};

/// Newton or fixed-point iteration exhausted its budget.
class ConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Root where the constraint Jacobian with respect to the unknowns vanishes
/// (degenerate implicit root, hodograph fold, ill-conditioned matrix).
class DegenerateError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Syntax error in an expression, with the 0-based character offset.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, std::size_t position);

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

}  // namespace bateman
