#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "deqlab/ensembles.hpp"
#include "deqlab/linear_deq.hpp"
#include "deqlab/nonlinearity.hpp"
#include "deqlab/numerics.hpp"
#include "deqlab/stats.hpp"

namespace deqlab {

/// h_{t+1} = W (phi(h_t) + x) from h0 (zero by default) until the residual
/// |h_{t+1} - h_t| / sqrt(N) reaches tol or t_max steps have run. With
/// stop_early = false all t_max steps run and the last residual is kept.
/// Divergence is recorded, never thrown.
FixedPointResult iterate_h(const Matrix& w, const Vector& x, const Nonlinearity& phi, std::size_t t_max, double tol,
                           const std::optional<Vector>& h0 = std::nullopt, bool stop_early = true);

/// Column g of the batch runs the map with weights sqrt_scales[g] * W, so one
/// unit-scale draw serves a whole sqrt(V) grid through a single GEMM per step.
struct BatchedFixedPoint {
    /// h_t per column (the first t whose residual met tol, else the last).
    Matrix h;
    std::vector<double> residual;
    std::vector<std::size_t> iterations;
    std::vector<bool> converged;
    std::vector<bool> diverged;
};

BatchedFixedPoint iterate_h_batched(const Matrix& w_unit, const Vector& x, const Nonlinearity& phi,
                                    std::span<const double> sqrt_scales, std::size_t t_max, double tol,
                                    bool stop_early = true);

struct SelfConsistentState {
    double sigma_h2 = 0.0;
    double sigma_phi2 = 0.0;
    double c_x_phi = 0.0;
    /// E[phi'(h)^2]; for hard-tanh the active-set probability P(|h| < 1).
    double p = 1.0;
    double scale = 0.0;
    double sigma_x2 = 0.0;
    double mean_x = 0.0;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Solves s = V (E[phi(h)^2] + 2 mean_x E[phi(h)] + sigma_x2), h ~ N(0, s), by
/// damped iteration s <- (1 - a) s + a F(s), a = 0.5, to relative residual
/// 1e-10 within 10^4 steps; ConvergenceError (carrying the last s) otherwise.
SelfConsistentState sigma_h_selfconsistent(double scale, double sigma_x2, double mean_x, const Nonlinearity& phi);

/// Spectral radius of W diag(phi'(h)) predicted for h ~ N(0, sigma_h2):
/// random/orthogonal sqrt(V E[phi'^2]); GOE with hard-tanh or identity
/// 2 sqrt(V p). GOE with other nonlinearities throws InvalidArgument.
double radius_theory(Family family, double scale, const Nonlinearity& phi, double sigma_h2);

/// Spectral radius of W diag(phi'(h)). The nonzero spectrum equals that of
/// D^{1/2} W D^{1/2} on the entries with phi' > 0, so the matrix is
/// compressed to that block first. Exactly symmetric W goes through the
/// symmetric eigensolver (requires phi' >= 0), anything else through
/// spectral_radius_estimate.
double radius_empirical(const Matrix& w, const Vector& h, const Nonlinearity& phi, double tol = 1e-4);

/// sqrt(V) at which the predicted radius reaches 1, by bisection on
/// [lo, hi] to 1e-4. InvalidArgument if the bracket does not straddle it.
double predict_critical_V(Family family, const Nonlinearity& phi, double sigma_x2, double mean_x = 0.0,
                          double lo = 0.05, double hi = 4.0);

struct ResidualCell {
    Family family = Family::IidGaussian;
    double sqrt_scale = 0.0;
    std::size_t n_seeds = 0;
    /// Residuals at t_probe, clipped at 1e6.
    Summary residual;
    std::size_t n_diverged = 0;
    double predicted_critical = 0.0;
};

/// Residual |h_{t+1} - h_t| / sqrt(N) at t = t_probe per (family, sqrt(V)),
/// x ~ N(0, 1) coordinates shared across families for a given seed.
std::vector<ResidualCell> residual_sweep(std::span<const Family> families, std::span<const double> sqrt_grid,
                                         std::size_t n, std::size_t n_seeds, std::size_t t_probe,
                                         const Nonlinearity& phi, const SeedDerivation& seed, unsigned threads = 1);

struct NonlinearNtkRecord {
    double ntk_mean = 0.0;
    double ntk_stderr = 0.0;
    /// ntk_mean / (x . x').
    double ntk_factor = 0.0;
    double ntk_factor_stderr = 0.0;
    std::size_t n_seeds = 0;
    std::size_t n_diverged = 0;
};

/// Monte-Carlo over (W, v) of sum_ab df(x)/dW_ab df(x')/dW_ab for f = v . z*,
/// with the gradient from the implicit function theorem and phi' taken at
/// the pre-activation W z*.
NonlinearNtkRecord ntk_nonlinear_empirical(const EnsembleSpec& spec, const Vector& x, const Vector& x_prime,
                                           const Nonlinearity& phi, std::size_t n_seeds, const SeedDerivation& seed,
                                           unsigned threads = 1);

}  // namespace deqlab
