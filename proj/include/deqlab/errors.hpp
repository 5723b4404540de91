#pragma once

#include <stdexcept>
#include <string>

namespace deqlab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad dimensions, negative variances, out-of-range probabilities.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A linear system was singular to working precision. At I - W this means
/// the scale sits at (or beyond) a stability threshold for this sample.
class SingularMatrixError : public Error {
public:
    using Error::Error;
};

/// A closed form was queried at or beyond its critical scale.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double critical_scale)
        : Error(what), critical_scale_(critical_scale) {}

    double critical_scale() const noexcept { return critical_scale_; }

private:
    double critical_scale_;
};

/// An iterative scheme ran out of budget.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_value)
        : Error(what), last_value_(last_value) {}

    double last_value() const noexcept { return last_value_; }

private:
    double last_value_;
};

}  // namespace deqlab
