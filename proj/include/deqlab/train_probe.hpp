#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "deqlab/ensembles.hpp"
#include "deqlab/nonlinearity.hpp"
#include "deqlab/numerics.hpp"
#include "deqlab/rng.hpp"

namespace deqlab {

struct DeqSolution {
    Vector z;
    /// Pre-activation W z.
    Vector h;
    std::size_t iterations = 0;
    /// max_i |z_i - phi(W z)_i - x_i| at the returned point.
    double residual = 0.0;
    bool converged = false;
};

/// z* = phi(W z*) + x by iterating z <- phi(W z) + x until
/// |z_{t+1} - z_t| / sqrt(N) <= tol. A converged iterate is then polished
/// with up to three Newton steps (exact for piecewise-linear phi once the
/// active set settles) so finite differences of v . z* are not swamped by
/// solver error. Divergence or a spent budget gives converged = false.
DeqSolution deq_forward(const Matrix& w, const Vector& x, const Nonlinearity& phi, double tol = 1e-10,
                        std::size_t t_max = 100000);

/// D a with D = diag(phi'(h)) and (I - D W)^T a = v. SingularMatrixError at threshold.
Vector deq_adjoint(const Matrix& w, const Vector& h, const Nonlinearity& phi, const Vector& v);

/// Gradient of f = v . z* with respect to W: (D a) z*^T.
Matrix deq_vjp(const Matrix& w, const DeqSolution& solution, const Nonlinearity& phi, const Vector& v);

/// Solves the forward problem first; DivergenceError if it does not converge.
Matrix deq_vjp(const Matrix& w, const Vector& x, const Nonlinearity& phi, const Vector& v);

/// Synthetic regression: y = u . x + noise with u_i ~ N(0, 1/N), x ~ N(0, I).
struct ProbeTask {
    std::uint64_t teacher_seed = 7;
    std::size_t n_train = 64;
    std::size_t n_validation = 32;
    std::size_t dim = 32;
    double noise = 0.1;
    Activation activation = Activation::HardTanh;

    void validate() const;
};

struct ProbeData {
    Matrix x_train;  // N x n_train
    Vector y_train;
    Matrix x_validation;
    Vector y_validation;
};

ProbeData make_probe_data(const ProbeTask& task);

struct TrainRow {
    Family family = Family::IidGaussian;
    double sqrt_scale = 0.0;
    std::size_t seed = 0;
    double initial_loss = 0.0;
    double final_train_loss = 0.0;
    double final_validation_loss = 0.0;
    bool diverged = false;
    /// Step at which the forward solve failed or the loss blew up.
    std::optional<std::size_t> failed_at_step;
    /// First step with train loss at or below half the initial loss.
    std::optional<std::size_t> steps_to_threshold;
    /// Train loss after each completed step (index 0 is the initial loss).
    std::vector<double> loss_curve;
};

struct TrainOptions {
    double learning_rate = 0.05;
    std::size_t steps = 100;
    /// Loss above this counts as divergence.
    double loss_limit = 1e3;
    double forward_tol = 1e-8;
    std::size_t forward_max_iter = 5000;
    unsigned threads = 1;
};

/// Full-batch gradient descent on (W, v) for each (family, sqrt(V), seed);
/// W starts as a draw at scale V. Divergence is data, not an error.
std::vector<TrainRow> train_stability_sweep(const ProbeTask& task, std::span<const Family> families,
                                            std::span<const double> sqrt_grid, std::size_t n_seeds,
                                            const TrainOptions& options, const SeedDerivation& seed);

TrainRow train_single(const ProbeTask& task, const ProbeData& data, Family family, double sqrt_scale,
                      std::size_t replicate, const TrainOptions& options, const SeedDerivation& seed);

}  // namespace deqlab
