#pragma once

#include <cstddef>
#include <optional>

#include "deqlab/analytic_moments.hpp"
#include "deqlab/ensembles.hpp"
#include "deqlab/numerics.hpp"
#include "deqlab/rng.hpp"

namespace deqlab {

enum class InputMode { FixedVector, GaussianRandom };

struct LinearDeqProblem {
    EnsembleSpec spec;
    /// Used as-is for FixedVector; ignored (redrawn per seed) for GaussianRandom.
    Vector x;
    WeightMode weight_mode = WeightMode::Tied;
    InputMode input_mode = InputMode::FixedVector;
    double input_variance = 1.0;

    void validate() const;
};

struct FixedPointResult {
    Vector solution;
    std::size_t iterations = 0;
    /// |z_{t+1} - z_t| / sqrt(N) at the last step taken.
    double final_residual = 0.0;
    bool converged = false;
    /// Residual exceeded the blow-up threshold or became non-finite.
    bool diverged = false;
};

/// Residual level treated as a blow-up: 1e6 times the input's RMS size.
double divergence_threshold(const Vector& x);

/// z* = (I - W)^{-1} x. Raises SingularMatrixError at or beyond threshold.
Vector solve_closed_form(const Matrix& w, const Vector& x);

/// z_{t+1} = W z_t + x from z0 until the residual drops to tol or t_max steps.
/// Never throws on divergence; the result records it.
FixedPointResult iterate_tied(const Matrix& w, const Vector& x, const Vector& z0, std::size_t t_max, double tol);

enum class UntiedSampler {
    /// Draws W_k z_k directly from its exact conditional law (O(N) per step).
    Matvec,
    /// Samples every W_k as a full matrix (O(N^3) per step for orthogonal).
    ExplicitMatrix,
};

/// z_t of the untied map z_{k+1} = W_k z_k + x with independent W_k.
Vector iterate_untied(const EnsembleSpec& spec, const Vector& x, std::size_t t, const SeedDerivation& seed,
                      UntiedSampler sampler = UntiedSampler::Matvec, const std::optional<Vector>& z0 = std::nullopt);

/// Smallest t with V^t < 1e-6, so truncating the untied series there leaves
/// a bias far below Monte-Carlo noise.
std::size_t untied_truncation_depth(double scale);

struct MomentEstimate {
    MomentReport variance_factor;
    /// Per-seed (x . z*) / (x . x): 1 for random/orthogonal, f_c(V) for GOE.
    double mean_ratio = 0.0;
    double mean_ratio_stderr = 0.0;
    /// Seed averages of z*_i and their standard errors (FixedVector input only).
    Vector coordinate_mean;
    Vector coordinate_stderr;
};

/// Monte-Carlo z* statistics over n_seeds weight draws. Diverged or singular
/// seeds are excluded and counted; InvalidArgument if all of them are.
MomentEstimate estimate_moments(const LinearDeqProblem& problem, std::size_t n_seeds, const SeedDerivation& seed,
                                unsigned threads = 1);

struct LengthVarianceOptions {
    TraceEstimator estimator = TraceEstimator::Exact;
    std::size_t probes = 32;
    unsigned threads = 1;
};

/// T(V) = tr_N[(M^T M)^2] per seed. Tied: M = (I - W)^{-1} through
/// gram_inverse_sq_trace(I - W). Untied: M is the truncated series of
/// products of independent draws. Singular seeds count as diverged.
MomentReport estimate_length_variance(const EnsembleSpec& spec, WeightMode mode, std::size_t n_seeds,
                                      const SeedDerivation& seed, const LengthVarianceOptions& options = {});

/// Same, also returning the per-seed values (NaN for diverged seeds) so
/// callers can keep their own summaries.
MomentReport estimate_length_variance(const EnsembleSpec& spec, WeightMode mode, std::size_t n_seeds,
                                      const SeedDerivation& seed, const LengthVarianceOptions& options,
                                      std::vector<double>& per_seed);

struct ConvergenceBoundRecord {
    bool holds = false;
    bool diverged = false;
    double lhs = 0.0;
    double rhs = 0.0;
};

/// rhs = (2t / (1 - V)) (x . x) V^{t+1};  lhs = max_i |z*_i - (z_t)_i|^2 with z_0 = 0.
double convergence_bound_rhs(double scale, std::size_t t, double x_dot_x);
ConvergenceBoundRecord check_convergence_bound(const Matrix& w, const Vector& x, std::size_t t, double scale);

struct LinearKernelRecord {
    /// (1/N) E[z*(x) . z*(x')].
    double nngp_empirical = 0.0;
    double nngp_stderr = 0.0;
    /// E[|(I - W)^{-T} v|^2 z*(x) . z*(x')] with v_i ~ N(0, 1/N).
    double ntk_empirical = 0.0;
    double ntk_stderr = 0.0;
    /// ntk_empirical / (x . x').
    double ntk_factor_empirical = 0.0;
    double ntk_factor_stderr = 0.0;
    /// Square of the gram-trace factor.
    double ntk_theory_factor = 0.0;
    std::size_t n_seeds = 0;
    std::size_t n_diverged = 0;
};

LinearKernelRecord linear_kernels(const EnsembleSpec& spec, const Vector& x, const Vector& x_prime,
                                  std::size_t n_seeds, const SeedDerivation& seed, unsigned threads = 1);

}  // namespace deqlab
