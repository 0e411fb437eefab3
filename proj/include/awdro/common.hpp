// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace awdro {

// Tolerances used across the library. Input data is human-authored and gets
// the loose bound; internal arithmetic is double precision and gets the tight
// one.
inline constexpr double kProbTolInput = 1e-9;
inline constexpr double kProbTol = 1e-12;
inline constexpr double kMarginalTol = 1e-10;
inline constexpr double kPivotTol = 1e-11;

/// Malformed or inconsistent input (schema violations, bad probabilities).
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// A structural precondition does not hold (e.g. non-martingale tree passed
/// to a martingale solver).
struct ConstraintError : std::runtime_error {
    explicit ConstraintError(const std::string& what) : std::runtime_error(what) {}
};

/// A capability required by the requested operation is missing
/// (e.g. derivatives not supplied).
struct CapabilityError : std::runtime_error {
    explicit CapabilityError(const std::string& what) : std::runtime_error(what) {}
};

/// Oracle enumeration budget exceeded. Hard refusal, never a truncated answer.
struct BudgetError : std::runtime_error {
    explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

struct InternalError : std::runtime_error {
    explicit InternalError(const std::string& what) : std::runtime_error(what) {}
};

/// Dense row-major matrix of doubles. Instances in this library are tiny
/// (at most a few hundred columns), so no sparsity is attempted.
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, fill) {}

    double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> a_;
};

/// Conjugate exponent q = p/(p-1); +inf for p == 1.
inline double conjugate_exponent(double p) {
    if (p <= 1.0) return std::numeric_limits<double>::infinity();
    return p / (p - 1.0);
}

inline double pow_abs(double x, double p) {
    if (p == 1.0) return std::abs(x);
    if (p == 2.0) return x * x;
    return std::pow(std::abs(x), p);
}

}  // namespace awdro
