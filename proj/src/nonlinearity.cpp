#include "deqlab/nonlinearity.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deqlab/errors.hpp"

namespace deqlab {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::HardTanh: return "hardtanh";
        case Activation::Tanh: return "tanh";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "identity" || name == "linear") return Activation::Identity;
    if (name == "hardtanh" || name == "hard-tanh" || name == "hard_tanh") return Activation::HardTanh;
    if (name == "tanh") return Activation::Tanh;
    throw InvalidArgument("unknown nonlinearity '" + std::string(name) + "'");
}

double Nonlinearity::value(double h) const {
    switch (tag_) {
        case Activation::Identity: return h;
        case Activation::HardTanh: return std::clamp(h, -1.0, 1.0);
        case Activation::Tanh: return std::tanh(h);
    }
    return h;
}

double Nonlinearity::derivative(double h) const {
    switch (tag_) {
        case Activation::Identity: return 1.0;
        // At the kinks the one-sided derivatives differ; the open interval is used.
        case Activation::HardTanh: return std::abs(h) < 1.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(h);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

Vector Nonlinearity::apply(const Vector& h) const {
    Vector out(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) out[i] = value(h[i]);
    return out;
}

Vector Nonlinearity::derivative(const Vector& h) const {
    Vector out(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) out[i] = derivative(h[i]);
    return out;
}

void Nonlinearity::apply_inplace(Matrix& h) const {
    switch (tag_) {
        case Activation::Identity: return;
        case Activation::HardTanh: h = h.cwiseMax(-1.0).cwiseMin(1.0); return;
        case Activation::Tanh: h = h.array().tanh().matrix(); return;
    }
}

std::vector<double> Nonlinearity::kinks() const {
    if (tag_ == Activation::HardTanh) return {-1.0, 1.0};
    return {};
}

}  // namespace deqlab
