#pragma once

#include <string_view>
#include <vector>

#include "deqlab/numerics.hpp"

namespace deqlab {

enum class Activation { Identity, HardTanh, Tanh };

std::string_view to_string(Activation a);
/// "identity"/"linear", "hardtanh"/"hard-tanh", "tanh".
Activation parse_activation(std::string_view name);

/// Elementwise monotone non-decreasing map with phi(0) = 0.
class Nonlinearity {
public:
    explicit Nonlinearity(Activation tag = Activation::Identity) : tag_(tag) {}

    Activation tag() const { return tag_; }
    double value(double h) const;
    double derivative(double h) const;
    double operator()(double h) const { return value(h); }

    Vector apply(const Vector& h) const;
    Vector derivative(const Vector& h) const;
    /// Applies phi to every entry in place.
    void apply_inplace(Matrix& h) const;

    /// Points where phi' jumps (quadrature breakpoints).
    std::vector<double> kinks() const;

private:
    Activation tag_;
};

}  // namespace deqlab
