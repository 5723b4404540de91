#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "deqlab/ensembles.hpp"

namespace deqlab {

enum class WeightMode { Tied, Untied };

std::string_view to_string(WeightMode mode);
WeightMode parse_weight_mode(std::string_view name);

enum class MomentQuantity {
    VarianceFactor,   ///< N Var[z*_i] / (x.x)
    LengthVarianceT,  ///< T(V) = E tr_N[(M^T M)^2]; length variance F = 2 sigma_x^4 T / N
    GramTraceFactor,  ///< E tr_N[M^T M] = E[z*.z*] / (x.x)
};

std::string_view to_string(MomentQuantity q);
MomentQuantity parse_moment_quantity(std::string_view name);

struct MomentQuery {
    Family family = Family::IidGaussian;
    WeightMode weight_mode = WeightMode::Tied;
    double scale = 0.0;
    MomentQuantity quantity = MomentQuantity::VarianceFactor;
};

/// Theory value of one query together with an optional Monte-Carlo estimate.
struct MomentReport {
    MomentQuery query;
    double theory_value = 0.0;
    std::optional<double> mc_mean;
    std::optional<double> mc_stderr;
    std::optional<double> mc_median;
    std::optional<double> mc_q25;
    std::optional<double> mc_q75;
    std::size_t n_seeds = 0;
    std::size_t n_diverged = 0;
};

/// Critical scale: 1/4 for tied GOE (semicircle edge 2 sqrt(V) hits 1), 1 otherwise.
double critical_scale(Family family, WeightMode mode);

/// delta = 1 - V / V_c and its inverse.
double distance_to_threshold(Family family, WeightMode mode, double scale);
double scale_from_distance(Family family, WeightMode mode, double delta);

/// Edge fluctuations of an N x N random matrix are O(N^{-2/3}); they swamp the
/// gap delta once N < delta^{-3/2}. Returns true when results at (N, delta)
/// should be read with that caveat (always false for orthogonal weights, whose
/// spectrum is rigid, and for untied weights).
bool finite_size_caveat(Family family, WeightMode mode, double scale, std::size_t n);

/// Catalan number C_k, exact. Throws InvalidArgument once C_k overflows 64 bits (k > 36).
std::uint64_t catalan(int k);

/// f_c(x) = sum_k C_k x^k = (1 - sqrt(1 - 4x)) / (2x), with f_c(0) = 1.
double catalan_generating(double x);

/// Partial sums of sum_k C_k x^k to convergence (term < 1e-14 of the sum after
/// a geometric tail bound). Throws ConvergenceError if the cap is reached.
double catalan_series(double x);

/// sum_{i>=0} (2i+1) C_i V^i = E tr_N[(I - W)^{-2}] for GOE W, summed as a
/// series and cross-checked against 2V f_c'(V) + f_c(V) = -f_c(V) + 2/sqrt(1-4V).
double goe_gram_trace_series(double scale);

/// The closed form 1/sqrt(1-4V) - f_c(V) - 1. It disagrees with the series
/// (the pole term needs a factor 2) and exists so that Monte-Carlo runs can
/// show which of the two the data supports.
double goe_variance_factor_single_pole(double scale);

/// Second moment of z* relative to x: (E[z*.z*] - x.x) / (x.x).
double variance_factor_theory(Family family, WeightMode mode, double scale);

/// E[z*.z*] / (x.x) = E tr_N[M^T M].
double gram_trace_factor_theory(Family family, WeightMode mode, double scale);

/// T(V) = E tr_N[(M^T M)^2] with M = (I - W)^{-1} (tied) or the infinite
/// untied product sum. All forms equal 1 at V = 0.
double length_variance_theory(Family family, WeightMode mode, double scale);

/// Untied T(V) from the one-step recursion M = I + W M' (W independent of
/// M'), which keeps the terms where products share their leading factors:
///   T (1 - V^2) = 1 + 4 V g + c_2 V^2 g^2 + c_1 2 V,   g = 1 / (1 - V),
/// with c_2 = tr W^TW W^TW / V^2 - 1 (1 for random and GOE, 0 for orthogonal)
/// and c_1 = 1 for GOE only (W symmetric, so tr(W M' W M') survives).
/// Orthogonal matches length_variance_theory; random and GOE diverge as
/// (1 - V)^-3 rather than (1 - V)^-2.
double untied_length_variance_recursive(Family family, double scale);

/// Dispatches on the query's quantity.
double theory_value(const MomentQuery& query);

/// (2/pi) int_{-1}^{1} (1 - 2 sqrt(V) x)^{-4} sqrt(1 - x^2) dx, the
/// semicircle average of (1 - lambda)^{-4}.
double goe_tied_integral(double scale);

/// delta^{-2.5} / 8.
double goe_tied_asymptotic(double delta);

}  // namespace deqlab
