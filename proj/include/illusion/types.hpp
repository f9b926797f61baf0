#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace illusion {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input: parameters, specs, configs. Maps to CLI exit code 2.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ParseError : public InvalidArgument {
public:
    ParseError(std::size_t line, const std::string& what)
        : InvalidArgument("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Point outside the domain of a map, or on a circle where it is not differentiable.
class DomainError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// Solver breakdown or non-finite arithmetic. Maps to CLI exit code 3.
class NumericalError : public Error {
public:
    using Error::Error;
};

inline constexpr double pi = 3.14159265358979323846;

struct SymmetricEigen {
    double min;
    double max;
    Vec2 max_axis; // unit eigenvector of the larger eigenvalue
};

// Closed-form eigen-decomposition of a symmetric 2x2 matrix.
inline SymmetricEigen symmetric_eigen(const Mat2& m) {
    const double mean = 0.5 * (m(0, 0) + m(1, 1));
    const double half_diff = 0.5 * (m(0, 0) - m(1, 1));
    const double off = 0.5 * (m(0, 1) + m(1, 0));
    const double radius = std::hypot(half_diff, off);
    SymmetricEigen e{mean - radius, mean + radius, Vec2(1.0, 0.0)};
    if (radius > 0.0) {
        const double angle = 0.5 * std::atan2(off, half_diff);
        e.max_axis = Vec2(std::cos(angle), std::sin(angle));
    }
    return e;
}

// Uniform doubles in [0,1) from a 64-bit engine word; identical on every platform.
template <class Engine>
double unit_uniform(Engine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace illusion
