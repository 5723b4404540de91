#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "deqlab/numerics.hpp"

namespace deqlab {

using Complex = std::complex<double>;
using Rational = boost::multiprecision::cpp_rational;

/// Coefficients m_0..m_K of a series in w = 1/z. Moment generating
/// functions have m_0 = 0 and M(z) = sum_{k>=1} m_k z^{-k}.
struct PowerSeries {
    std::vector<double> coefficients;

    std::size_t order() const { return coefficients.empty() ? 0 : coefficients.size() - 1; }
    double operator[](std::size_t k) const { return coefficients.at(k); }
    /// Truncated sum at z (Horner in 1/z).
    Complex evaluate(Complex z) const;
};

struct ExactPowerSeries {
    std::vector<Rational> coefficients;

    std::size_t order() const { return coefficients.empty() ? 0 : coefficients.size() - 1; }
    const Rational& operator[](std::size_t k) const { return coefficients.at(k); }
    PowerSeries to_double() const;
};

/// Normalised trace of the resolvent, tr (z - M)^{-1}; Im G < 0 when Im z > 0.
using StieltjesFn = std::function<Complex(Complex)>;

/// Semicircle of variance V (support [-2 sqrt(V), 2 sqrt(V)]):
/// G(z) = (z - sqrt(z - a) sqrt(z + a)) / (2V), a = 2 sqrt(V), principal
/// square roots, so G ~ 1/z at infinity in every direction.
/// Real z on the support raises InvalidArgument.
Complex semicircle_stieltjes(Complex z, double scale);

/// Series of the moment generating function of (I - W)^{-1}, W GOE at scale
/// V < 1/4, to order k_max. Writing M = w N(w) turns -M + zM = 1 + V z^2 M^2
/// into N (1 - w) = 1 + V N^2, whose constant term is f_c(V) and whose
/// higher terms obey a linear recurrence.
PowerSeries goe_resolvent_mgf(double scale, std::size_t k_max);

/// Closed form M(z) = ((z - 1) - s) / (2 V z^2), s = sqrt((z-1)^2 - 4 V z^2),
/// evaluated as 2 / ((z - 1) + s) with s the product of principal roots
/// about the branch points 1 / (1 -+ 2 sqrt(V)).
Complex goe_resolvent_mgf_closed(Complex z, double scale);

/// tr[((I - W)^{-T} (I - W)^{-1})^2] for GOE W, from the printed closed form
/// (1/4V)((1 - 4V)^{-5/2} - (1 - 4V)^{-3/2}). Cross-checked against
/// goe_gram_second_moment_fd to 1e-6 (Error if they disagree).
double goe_gram_second_moment(double scale);

/// The same quantity as (1/4!) d^4 M / dw^4 at w = 0, from central finite
/// differences of the closed-form M(w) with step 1e-3 and one Richardson
/// step, evaluated in 50-digit arithmetic so the h^-4 roundoff is harmless.
double goe_gram_second_moment_fd(double scale);

/// Moments m_k = tr[G^k], G = (I - W)^{-T} (I - W)^{-1}, W i.i.d. Gaussian at
/// scale V < 1, from the cubic V^2 M^3 + 2 V w M^2 + ((V - 1) w + w^2) M + w^2 = 0
/// solved order by order.
PowerSeries random_gram_moment_series(double scale, std::size_t k_max);
ExactPowerSeries random_gram_moment_series(const Rational& scale, std::size_t k_max);

/// G(z) = (1 - p)/z + (z - sqrt(z^2 - 4 V p)) / (2V): an atom of mass 1 - p
/// at 0 plus a semicircle of mass p and radius 2 sqrt(V p).
Complex hardtanh_stieltjes(Complex z, double p, double scale);

/// The same spectrum as a SpectralDensity on `grid_points` points over 1.2x
/// the support. The continuous part is rescaled so its trapezoid mass is
/// exactly p. p = 0 or V = 0 collapses to a unit atom at 0.
SpectralDensity hardtanh_jacobian_density(double p, double scale, std::size_t grid_points = 2001);

/// `n` equally spaced points covering [lo, hi] widened by `widen` about its centre.
std::vector<double> support_grid(double lo, double hi, std::size_t n = 2001, double widen = 1.2);

struct StieltjesInversionOptions {
    double eps1 = 1e-3;
    double eps2 = 2e-3;
    /// Minimum mass for a spike to be reported as an atom.
    double atom_threshold = 1e-4;
};

/// rho(x) = -(1/pi) Im G(x + i eps), linearly extrapolated from eps1 and eps2
/// to eps = 0 and clipped at 0. A grid point is taken as an atom when
/// -eps Im G stays put as eps halves (a continuous density would halve it);
/// the atom is located by golden-section search, its mass refined as
/// -eps Im G at eps = 1e-6, and its pole removed before the continuous part
/// is recovered. Im G > 0 anywhere above the axis raises Error.
SpectralDensity density_from_stieltjes(const StieltjesFn& g, const std::vector<double>& grid,
                                       const StieltjesInversionOptions& options = {});

}  // namespace deqlab
