#include "deqlab/train_probe.hpp"

#include <cmath>
#include <limits>

#include "deqlab/errors.hpp"
#include "deqlab/linear_deq.hpp"
#include "deqlab/stats.hpp"

namespace deqlab {
namespace {

Vector map_residual(const Matrix& w, const Vector& z, const Vector& x, const Nonlinearity& phi) {
    return z - phi.apply(w * z) - x;
}

Matrix i_minus_dw(const Matrix& w, const Vector& d) {
    Matrix a = -(d.asDiagonal() * w);
    a.diagonal().array() += 1.0;
    return a;
}

}  // namespace

DeqSolution deq_forward(const Matrix& w, const Vector& x, const Nonlinearity& phi, double tol, std::size_t t_max) {
    if (w.rows() != w.cols() || w.rows() != x.size()) throw InvalidArgument("deq_forward: dimension mismatch");
    require_finite(x, "deq_forward x");
    require_finite(w, "deq_forward W");
    const double root_n = std::sqrt(static_cast<double>(x.size()));
    const double blowup = divergence_threshold(x);

    DeqSolution sol;
    Vector z = Vector::Zero(x.size());
    Vector next(x.size());
    for (std::size_t t = 0; t < t_max; ++t) {
        next = phi.apply(w * z) + x;
        const double res = (next - z).norm() / root_n;
        z.swap(next);
        sol.iterations = t + 1;
        if (!std::isfinite(res) || res > blowup) {
            sol.z = z;
            sol.residual = std::numeric_limits<double>::infinity();
            return sol;
        }
        if (res <= tol) {
            sol.converged = true;
            break;
        }
    }

    double best = map_residual(w, z, x, phi).cwiseAbs().maxCoeff();
    if (sol.converged) {
        for (int k = 0; k < 3 && best > 0.0; ++k) {
            const Vector f = map_residual(w, z, x, phi);
            Vector step;
            try {
                step = solve_linear(i_minus_dw(w, phi.derivative(Vector(w * z))), Vector(-f));
            } catch (const SingularMatrixError&) {
                break;
            }
            const Vector trial = z + step;
            const double r = map_residual(w, trial, x, phi).cwiseAbs().maxCoeff();
            if (!(r < best)) break;
            z = trial;
            best = r;
        }
    }
    sol.z = std::move(z);
    sol.h = w * sol.z;
    sol.residual = best;
    return sol;
}

Vector deq_adjoint(const Matrix& w, const Vector& h, const Nonlinearity& phi, const Vector& v) {
    const Vector d = phi.derivative(h);
    const Vector a = solve_linear(Matrix(i_minus_dw(w, d).transpose()), v);
    return d.cwiseProduct(a);
}

Matrix deq_vjp(const Matrix& w, const DeqSolution& solution, const Nonlinearity& phi, const Vector& v) {
    if (v.size() != w.rows()) throw InvalidArgument("deq_vjp: readout has the wrong dimension");
    return deq_adjoint(w, solution.h, phi, v) * solution.z.transpose();
}

Matrix deq_vjp(const Matrix& w, const Vector& x, const Nonlinearity& phi, const Vector& v) {
    const auto sol = deq_forward(w, x, phi);
    if (!sol.converged) throw DivergenceError("deq_vjp: forward fixed point did not converge", 0.0);
    return deq_vjp(w, sol, phi, v);
}

void ProbeTask::validate() const {
    if (dim == 0 || n_train == 0) throw InvalidArgument("ProbeTask: dimension and training size must be positive");
    if (!(noise >= 0.0)) throw InvalidArgument("ProbeTask: noise must be >= 0");
}

ProbeData make_probe_data(const ProbeTask& task) {
    task.validate();
    const SeedDerivation root{task.teacher_seed, 0, 0, 0};
    const auto n = static_cast<Eigen::Index>(task.dim);
    const Vector u = sample_gaussian_vector(task.dim, 1.0 / static_cast<double>(task.dim), root,
                                            StreamPurpose::Teacher, 0);
    auto draw = [&](std::size_t count, std::uint32_t sub, Matrix& xs, Vector& ys) {
        RandomStream stream(root, StreamPurpose::Teacher, sub);
        xs.resize(n, static_cast<Eigen::Index>(count));
        for (Eigen::Index j = 0; j < xs.cols(); ++j)
            for (Eigen::Index i = 0; i < n; ++i) xs(i, j) = stream.normal();
        ys = xs.transpose() * u;
        for (Eigen::Index j = 0; j < ys.size(); ++j) ys[j] += task.noise * stream.normal();
    };
    ProbeData data;
    draw(task.n_train, 1, data.x_train, data.y_train);
    draw(task.n_validation, 2, data.x_validation, data.y_validation);
    return data;
}

TrainRow train_single(const ProbeTask& task, const ProbeData& data, Family family, double sqrt_scale,
                      std::size_t replicate, const TrainOptions& options, const SeedDerivation& seed) {
    const Nonlinearity phi(task.activation);
    const auto s = seed.with_family(family_tag(family)).with_replicate(replicate);
    Matrix w = sqrt_scale * sample({family, task.dim, 1.0}, s);
    Vector v = sample_gaussian_vector(task.dim, 1.0 / static_cast<double>(task.dim), s, StreamPurpose::Readout);

    TrainRow row;
    row.family = family;
    row.sqrt_scale = sqrt_scale;
    row.seed = replicate;
    const auto n_train = data.x_train.cols();
    const double inv_n = 1.0 / static_cast<double>(n_train);

    auto fail = [&](std::size_t step) {
        row.diverged = true;
        row.failed_at_step = step;
        row.steps_to_threshold.reset();
    };

    std::vector<DeqSolution> sols(static_cast<std::size_t>(n_train));
    for (std::size_t step = 0; step <= options.steps; ++step) {
        double loss = 0.0;
        bool ok = true;
        for (Eigen::Index i = 0; i < n_train && ok; ++i) {
            auto& sol = sols[static_cast<std::size_t>(i)];
            sol = deq_forward(w, data.x_train.col(i), phi, options.forward_tol, options.forward_max_iter);
            if (!sol.converged) ok = false;
            const double e = v.dot(sol.z) - data.y_train[i];
            loss += e * e * inv_n;
        }
        if (!ok || !std::isfinite(loss) || loss > options.loss_limit) {
            fail(step);
            break;
        }
        row.loss_curve.push_back(loss);
        if (step == 0) row.initial_loss = loss;
        row.final_train_loss = loss;
        if (!row.steps_to_threshold && loss <= 0.5 * row.initial_loss && step > 0) row.steps_to_threshold = step;
        if (step == options.steps) break;

        Matrix grad_w = Matrix::Zero(w.rows(), w.cols());
        Vector grad_v = Vector::Zero(v.size());
        try {
            for (Eigen::Index i = 0; i < n_train; ++i) {
                const auto& sol = sols[static_cast<std::size_t>(i)];
                const double c = 2.0 * inv_n * (v.dot(sol.z) - data.y_train[i]);
                grad_w.noalias() += c * deq_adjoint(w, sol.h, phi, v) * sol.z.transpose();
                grad_v += c * sol.z;
            }
        } catch (const SingularMatrixError&) {
            fail(step);
            break;
        }
        w -= options.learning_rate * grad_w;
        v -= options.learning_rate * grad_v;
    }

    if (!row.diverged) {
        double val = 0.0;
        const auto n_val = data.x_validation.cols();
        for (Eigen::Index i = 0; i < n_val; ++i) {
            const auto sol =
                deq_forward(w, data.x_validation.col(i), phi, options.forward_tol, options.forward_max_iter);
            if (!sol.converged) {
                val = std::numeric_limits<double>::quiet_NaN();
                break;
            }
            const double e = v.dot(sol.z) - data.y_validation[i];
            val += e * e / static_cast<double>(n_val);
        }
        row.final_validation_loss = val;
    } else {
        row.final_train_loss = std::numeric_limits<double>::quiet_NaN();
        row.final_validation_loss = std::numeric_limits<double>::quiet_NaN();
    }
    return row;
}

std::vector<TrainRow> train_stability_sweep(const ProbeTask& task, std::span<const Family> families,
                                            std::span<const double> sqrt_grid, std::size_t n_seeds,
                                            const TrainOptions& options, const SeedDerivation& seed) {
    task.validate();
    const ProbeData data = make_probe_data(task);
    const std::size_t nf = families.size(), ng = sqrt_grid.size();
    std::vector<TrainRow> rows(nf * ng * n_seeds);
    parallel_for(rows.size(), options.threads, [&](std::size_t k) {
        const std::size_t f = k / (ng * n_seeds);
        const std::size_t g = (k / n_seeds) % ng;
        const std::size_t r = k % n_seeds;
        rows[k] = train_single(task, data, families[f], sqrt_grid[g], r, options, seed);
    });
    return rows;
}

}  // namespace deqlab
