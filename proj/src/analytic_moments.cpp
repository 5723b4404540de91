#include "deqlab/analytic_moments.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "deqlab/errors.hpp"

namespace deqlab {
namespace {

void require_subcritical(Family family, WeightMode mode, double scale) {
    if (!(scale >= 0.0) || !std::isfinite(scale))
        throw InvalidArgument("moment theory: scale must be finite and >= 0");
    const double vc = critical_scale(family, mode);
    if (scale >= vc)
        throw DivergenceError("moment theory: V=" + std::to_string(scale) + " is at or above V_c=" +
                                  std::to_string(vc) + " for " + std::string(to_string(family)) + " " +
                                  std::string(to_string(mode)) + " weights",
                              vc);
}

constexpr std::size_t kSeriesCap = 50'000'000;

}  // namespace

std::string_view to_string(WeightMode mode) {
    return mode == WeightMode::Tied ? "tied" : "untied";
}

WeightMode parse_weight_mode(std::string_view name) {
    if (name == "tied") return WeightMode::Tied;
    if (name == "untied") return WeightMode::Untied;
    throw InvalidArgument("unknown weight mode '" + std::string(name) + "'");
}

std::string_view to_string(MomentQuantity q) {
    switch (q) {
        case MomentQuantity::VarianceFactor: return "variance_factor";
        case MomentQuantity::LengthVarianceT: return "length_variance_T";
        case MomentQuantity::GramTraceFactor: return "gram_trace_factor";
    }
    return "unknown";
}

MomentQuantity parse_moment_quantity(std::string_view name) {
    if (name == "variance_factor") return MomentQuantity::VarianceFactor;
    if (name == "length_variance_T") return MomentQuantity::LengthVarianceT;
    if (name == "gram_trace_factor") return MomentQuantity::GramTraceFactor;
    throw InvalidArgument("unknown moment quantity '" + std::string(name) + "'");
}

double critical_scale(Family family, WeightMode mode) {
    return (family == Family::GOE && mode == WeightMode::Tied) ? 0.25 : 1.0;
}

double distance_to_threshold(Family family, WeightMode mode, double scale) {
    return 1.0 - scale / critical_scale(family, mode);
}

double scale_from_distance(Family family, WeightMode mode, double delta) {
    return critical_scale(family, mode) * (1.0 - delta);
}

bool finite_size_caveat(Family family, WeightMode mode, double scale, std::size_t n) {
    if (family == Family::Orthogonal || mode == WeightMode::Untied) return false;
    const double delta = distance_to_threshold(family, mode, scale);
    if (delta <= 0.0) return true;
    return static_cast<double>(n) < std::pow(delta, -1.5);
}

std::uint64_t catalan(int k) {
    if (k < 0) throw InvalidArgument("catalan: k must be >= 0");
    unsigned __int128 c = 1;
    for (int i = 0; i < k; ++i) {
        // C_{i+1} = C_i * 2(2i+1) / (i+2), exact at every step.
        c = c * static_cast<unsigned __int128>(2 * (2 * i + 1)) / static_cast<unsigned __int128>(i + 2);
        if (c > std::numeric_limits<std::uint64_t>::max())
            throw InvalidArgument("catalan: C_" + std::to_string(k) + " overflows 64 bits");
    }
    return static_cast<std::uint64_t>(c);
}

double catalan_generating(double x) {
    if (x > 0.25) throw DivergenceError("catalan_generating: x above 1/4", 0.25);
    if (x == 0.0) return 1.0;
    // Rationalised form 2 / (1 + sqrt(1 - 4x)) avoids cancellation at small x.
    return 2.0 / (1.0 + std::sqrt(1.0 - 4.0 * x));
}

double catalan_series(double x) {
    if (std::abs(x) >= 0.25) throw DivergenceError("catalan_series: |x| must be below 1/4", 0.25);
    double term = 1.0;  // C_0 x^0
    double sum = 1.0;
    for (std::size_t k = 0; k < kSeriesCap; ++k) {
        const double kk = static_cast<double>(k);
        const double ratio = 2.0 * (2.0 * kk + 1.0) / (kk + 2.0) * x;
        term *= ratio;
        sum += term;
        const double r = std::abs(ratio);
        if (std::abs(term) * (r < 1.0 ? r / (1.0 - r) : 1.0) < 1e-14 * std::abs(sum) || term == 0.0) return sum;
    }
    throw ConvergenceError("catalan_series: cap reached before convergence", sum);
}

double goe_gram_trace_series(double scale) {
    require_subcritical(Family::GOE, WeightMode::Tied, scale);
    double c_term = 1.0;  // C_i V^i
    double sum = 1.0;     // i = 0 term: (2*0+1) C_0
    bool converged = false;
    for (std::size_t i = 0; i < kSeriesCap; ++i) {
        const double ii = static_cast<double>(i);
        c_term *= 2.0 * (2.0 * ii + 1.0) / (ii + 2.0) * scale;
        const double term = (2.0 * ii + 3.0) * c_term;
        sum += term;
        // (2i+1) C_i V^i has ratio -> 4V from above; bound the tail geometrically.
        const double r = 4.0 * scale * (2.0 * ii + 5.0) / (2.0 * ii + 3.0);
        const double tail = r < 1.0 ? term * r / (1.0 - r) : term;
        if (tail < 1e-14 * sum || term == 0.0) {
            converged = true;
            break;
        }
    }
    if (!converged) throw ConvergenceError("goe_gram_trace_series: cap reached before convergence", sum);
    const double closed = -catalan_generating(scale) + 2.0 / std::sqrt(1.0 - 4.0 * scale);
    if (std::abs(sum - closed) > 1e-10 * std::abs(closed))
        throw Error("goe_gram_trace_series: series and closed form disagree (" + std::to_string(sum) + " vs " +
                    std::to_string(closed) + ")");
    return sum;
}

double goe_variance_factor_single_pole(double scale) {
    require_subcritical(Family::GOE, WeightMode::Tied, scale);
    return 1.0 / std::sqrt(1.0 - 4.0 * scale) - catalan_generating(scale) - 1.0;
}

double gram_trace_factor_theory(Family family, WeightMode mode, double scale) {
    require_subcritical(family, mode, scale);
    if (family == Family::GOE && mode == WeightMode::Tied) return goe_gram_trace_series(scale);
    return 1.0 / (1.0 - scale);
}

double variance_factor_theory(Family family, WeightMode mode, double scale) {
    return gram_trace_factor_theory(family, mode, scale) - 1.0;
}

double length_variance_theory(Family family, WeightMode mode, double scale) {
    require_subcritical(family, mode, scale);
    const double v = scale;
    const double a = 1.0 - v;
    const double b = 1.0 - v * v;
    if (mode == WeightMode::Untied) {
        if (family == Family::Orthogonal) return 2.0 / (a * a) - 1.0 / b;
        return 2.0 / (a * a) + 1.0 / (b * b) - 2.0 / b;
    }
    switch (family) {
        case Family::Orthogonal: return 2.0 / (a * a * a) - 1.0 / (a * a);
        case Family::IidGaussian: return v * v / std::pow(a, 4) + 2.0 * v / std::pow(a, 3) + 1.0 / (a * a);
        case Family::GOE: {
            // (1/4V)((1-4V)^{-5/2} - (1-4V)^{-3/2}) = (1-4V)^{-5/2}; the product
            // form has no cancellation and gives the V -> 0 limit 1 directly.
            return std::pow(1.0 - 4.0 * v, -2.5);
        }
    }
    return 0.0;
}

double untied_length_variance_recursive(Family family, double scale) {
    require_subcritical(family, WeightMode::Untied, scale);
    const double v = scale;
    const double g = 1.0 / (1.0 - v);
    double numerator = 1.0 + 4.0 * v * g;
    if (family != Family::Orthogonal) numerator += v * v * g * g;
    if (family == Family::GOE) numerator += 2.0 * v;
    return numerator / (1.0 - v * v);
}

double theory_value(const MomentQuery& query) {
    switch (query.quantity) {
        case MomentQuantity::VarianceFactor: return variance_factor_theory(query.family, query.weight_mode, query.scale);
        case MomentQuantity::LengthVarianceT:
            return length_variance_theory(query.family, query.weight_mode, query.scale);
        case MomentQuantity::GramTraceFactor:
            return gram_trace_factor_theory(query.family, query.weight_mode, query.scale);
    }
    return 0.0;
}

double goe_tied_integral(double scale) {
    if (!(scale >= 0.0)) throw InvalidArgument("goe_tied_integral: scale must be >= 0");
    const double root = std::sqrt(scale);
    if (root >= 0.5) throw DivergenceError("goe_tied_integral: sqrt(V) must be below 1/2", 0.25);
    boost::math::quadrature::tanh_sinh<double> integrator;
    auto f = [root](double x) {
        const double d = 1.0 - 2.0 * root * x;
        return std::sqrt(std::max(0.0, 1.0 - x * x)) / (d * d * d * d);
    };
    return 2.0 / std::numbers::pi * integrator.integrate(f, -1.0, 1.0, 1e-13);
}

double goe_tied_asymptotic(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("goe_tied_asymptotic: delta must be in (0, 1)");
    return std::pow(delta, -2.5) / 8.0;
}

}  // namespace deqlab
