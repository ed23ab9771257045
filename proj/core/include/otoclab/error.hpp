#pragma once

#include <stdexcept>
#include <string>

namespace otoclab {

// Bad argument: unknown identifier, out-of-range size, malformed config.
class InvalidParameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operands live in different bases or have mismatched shapes.
class BasisMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Point outside the compact classical phase space s^2 <= 2.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Eigensolver failed to reach the residual contract.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace otoclab
