#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "deqlab/rng.hpp"

namespace deqlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Throws InvalidArgument naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);
void require_finite(const Vector& v, const char* what);

// ---------------------------------------------------------------------------
// Spectral densities

struct Atom {
    double location = 0.0;
    double mass = 0.0;
};

/// A spectrum split into point masses and a continuous part sampled on an
/// ascending grid. Masses of the continuous part are trapezoidal integrals.
struct SpectralDensity {
    std::vector<Atom> atoms;
    std::vector<double> grid;
    std::vector<double> density;

    double atom_mass() const;
    double continuous_mass() const;
    double total_mass() const { return atom_mass() + continuous_mass(); }

    /// k-th moment, atoms included, continuous part by trapezoid rule.
    double moment(int k) const;

    /// Cumulative distribution of the full measure at x.
    double cdf(double x) const;

    /// Cumulative distribution of the continuous part only, normalised to 1.
    double continuous_cdf(double x) const;

    /// Throws InvalidArgument unless masses sum to 1 within `tol`, the grid
    /// is ascending and the density is non-negative.
    void validate(double tol = 1e-6) const;
};

/// sup_x |F_emp(x) - cdf(x)| for a sample of points. `samples` need not be sorted.
double kolmogorov_distance(std::vector<double> samples, const std::function<double(double)>& cdf);

// ---------------------------------------------------------------------------
// Dense kernels

/// Solves A X = B by LU with partial pivoting. The relative residual is
/// checked against 1e-10 after one refinement step; a numerically singular
/// A raises SingularMatrixError.
Matrix solve_linear(const Matrix& a, const Matrix& b);
Vector solve_linear(const Matrix& a, const Vector& b);

enum class TraceEstimator { Exact, Hutchinson };

struct TraceEstimate {
    double value = 0.0;
    /// Zero for the exact path; sample standard error for Hutchinson.
    double std_error = 0.0;
    std::size_t probes = 0;
};

/// tr_N[(A^T A)^{-2}] = (1/N) sum_i sigma_i(A)^{-4}, exactly: forms A^{-1},
/// G = A^{-1} A^{-T} and returns |G|_F^2 / N.
double gram_inverse_sq_trace(const Matrix& a);

/// Hutchinson estimate of the same trace with Rademacher probes u:
/// E|G u|^2 = tr[G^2]. Each probe costs two triangular solve pairs on one LU
/// factorisation. The per-probe variance is 2(|G^2|_F^2 - sum_i (G^2)_ii^2),
/// reported through the sample standard error.
TraceEstimate gram_inverse_sq_trace_hutchinson(const Matrix& a, std::size_t probes, const SeedDerivation& seed);

TraceEstimate gram_inverse_sq_trace(const Matrix& a, TraceEstimator estimator, std::size_t probes,
                                    const SeedDerivation& seed);

/// All eigenvalues of a symmetric matrix, ascending.
std::vector<double> sym_spectrum(const Matrix& s);

/// Spectral radius of a general square matrix by repeated squaring.
///
/// With L_j = log |M^(2^j)|_F the estimate exp((L_{j+1} - L_j) / 2^j) cancels
/// the eigenvector-conditioning prefactor, handles complex-conjugate dominant
/// pairs and converges like O(2^-j). Iterates are renormalised each squaring.
/// Stops once consecutive estimates agree to tol/4 * max(r, 0.1).
double spectral_radius_estimate(const Matrix& m, double tol = 1e-3);

// ---------------------------------------------------------------------------
// Quadrature

/// E[f(h)] for h ~ N(mean, variance).
///
/// Without breakpoints this is a 96-node Gauss-Hermite rule (exact for
/// polynomials of degree <= 191). When `breakpoints` lists the points where
/// f or its derivatives jump, the Gaussian measure is split there and each
/// piece (tails truncated at 14 standard deviations) is integrated with
/// composite 32-node Gauss-Legendre panels no wider than one standard
/// deviation, which keeps piecewise-smooth integrands accurate to ~1e-13.
double gauss_hermite_expect(const std::function<double(double)>& f, double mean, double variance,
                            std::span<const double> breakpoints = {});

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Golub-Welsch nodes for the probabilists' Hermite weight, normalised so
/// the weights sum to 1.
QuadratureRule gauss_hermite_rule(std::size_t n);

/// Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre_rule(std::size_t n);

}  // namespace deqlab
