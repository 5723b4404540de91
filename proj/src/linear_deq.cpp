#include "deqlab/linear_deq.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "deqlab/errors.hpp"
#include "deqlab/stats.hpp"

namespace deqlab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double theory_or_nan(const MomentQuery& q) {
    try {
        return theory_value(q);
    } catch (const DivergenceError&) {
        return kNaN;
    }
}

void fill_mc(MomentReport& report, const std::vector<double>& per_seed) {
    std::vector<double> ok;
    ok.reserve(per_seed.size());
    for (double v : per_seed)
        if (std::isfinite(v)) ok.push_back(v);
    report.n_seeds = per_seed.size();
    report.n_diverged = per_seed.size() - ok.size();
    if (ok.empty()) return;
    const Summary s = summarize(ok);
    report.mc_mean = s.mean;
    report.mc_stderr = s.std_error;
    report.mc_median = s.median;
    report.mc_q25 = s.q25;
    report.mc_q75 = s.q75;
}

Matrix identity_minus(const Matrix& w) {
    Matrix a = -w;
    a.diagonal().array() += 1.0;
    return a;
}

}  // namespace

void LinearDeqProblem::validate() const {
    spec.validate();
    if (!(input_variance >= 0.0) || !std::isfinite(input_variance))
        throw InvalidArgument("LinearDeqProblem: input variance must be finite and >= 0");
    if (input_mode == InputMode::FixedVector) {
        if (static_cast<std::size_t>(x.size()) != spec.dim)
            throw InvalidArgument("LinearDeqProblem: x has the wrong dimension");
        require_finite(x, "LinearDeqProblem x");
    }
}

double divergence_threshold(const Vector& x) {
    const double rms = x.size() > 0 ? x.norm() / std::sqrt(static_cast<double>(x.size())) : 0.0;
    return 1e6 * (rms > 0.0 ? rms : 1.0);
}

Vector solve_closed_form(const Matrix& w, const Vector& x) {
    if (w.rows() != w.cols() || w.rows() != x.size())
        throw InvalidArgument("solve_closed_form: dimension mismatch");
    return solve_linear(identity_minus(w), x);
}

FixedPointResult iterate_tied(const Matrix& w, const Vector& x, const Vector& z0, std::size_t t_max, double tol) {
    if (w.rows() != w.cols() || w.rows() != x.size() || z0.size() != x.size())
        throw InvalidArgument("iterate_tied: dimension mismatch");
    require_finite(w, "iterate_tied W");
    require_finite(x, "iterate_tied x");
    require_finite(z0, "iterate_tied z0");

    const double root_n = std::sqrt(static_cast<double>(x.size()));
    const double blowup = divergence_threshold(x);
    FixedPointResult result;
    Vector z = z0;
    Vector next(x.size());
    for (std::size_t t = 0; t < t_max; ++t) {
        next.noalias() = w * z;
        next += x;
        const double res = (next - z).norm() / root_n;
        result.final_residual = res;
        if (!std::isfinite(res) || res > blowup) {
            result.diverged = true;
            result.iterations = t + 1;
            result.solution = std::move(next);
            return result;
        }
        // The residual of z_t is |z_{t+1} - z_t|; once small, z_t is reported.
        if (res <= tol) {
            result.converged = true;
            result.iterations = t;
            result.solution = std::move(z);
            return result;
        }
        z.swap(next);
        result.iterations = t + 1;
    }
    result.solution = std::move(z);
    return result;
}

Vector iterate_untied(const EnsembleSpec& spec, const Vector& x, std::size_t t, const SeedDerivation& seed,
                      UntiedSampler sampler, const std::optional<Vector>& z0) {
    spec.validate();
    if (static_cast<std::size_t>(x.size()) != spec.dim) throw InvalidArgument("iterate_untied: x has the wrong dimension");
    Vector z = z0 ? *z0 : Vector::Zero(x.size());
    if (z.size() != x.size()) throw InvalidArgument("iterate_untied: z0 has the wrong dimension");

    const double nd = static_cast<double>(spec.dim);
    Vector g(x.size());
    for (std::size_t k = 0; k < t; ++k) {
        const auto sub = static_cast<std::uint32_t>(k);
        if (sampler == UntiedSampler::ExplicitMatrix) {
            const Matrix w = sample(spec, seed, StreamPurpose::UntiedStep, sub);
            z = w * z + x;
            continue;
        }
        RandomStream stream(seed, StreamPurpose::UntiedStep, sub);
        for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = stream.normal();
        const double zn = z.norm();
        switch (spec.family) {
            case Family::IidGaussian:
                z = std::sqrt(spec.scale / nd) * zn * g + x;
                break;
            case Family::Orthogonal: {
                const double gn = g.norm();
                z = (gn > 0.0 ? std::sqrt(spec.scale) * zn / gn : 0.0) * g + x;
                break;
            }
            case Family::GOE: {
                // Cov(Wz) = (V/N)(|z|^2 I + z z^T) for symmetric Gaussian W.
                const double xi = stream.normal();
                z = std::sqrt(spec.scale / nd) * (zn * g + xi * z) + x;
                break;
            }
        }
    }
    return z;
}

std::size_t untied_truncation_depth(double scale) {
    if (!(scale >= 0.0 && scale < 1.0)) throw InvalidArgument("untied_truncation_depth: V must be in [0, 1)");
    if (scale == 0.0) return 1;
    return static_cast<std::size_t>(std::floor(std::log(1e-6) / std::log(scale))) + 1;
}

MomentEstimate estimate_moments(const LinearDeqProblem& problem, std::size_t n_seeds, const SeedDerivation& seed,
                                unsigned threads) {
    problem.validate();
    if (n_seeds == 0) throw InvalidArgument("estimate_moments: need at least one seed");
    const auto& spec = problem.spec;
    const auto n = static_cast<Eigen::Index>(spec.dim);
    const bool untied = problem.weight_mode == WeightMode::Untied;
    if (untied && spec.scale >= 1.0)
        throw DivergenceError("estimate_moments: untied series diverges for V >= 1", 1.0);
    const std::size_t depth = untied ? untied_truncation_depth(spec.scale) : 0;

    std::vector<double> factor(n_seeds, kNaN), ratio(n_seeds, kNaN);
    std::vector<Vector> solutions(n_seeds);
    parallel_for(n_seeds, threads, [&](std::size_t r) {
        const auto s = seed.with_replicate(r);
        const Vector x = problem.input_mode == InputMode::FixedVector
                             ? problem.x
                             : sample_gaussian_vector(spec.dim, problem.input_variance, s, StreamPurpose::Input);
        Vector z;
        try {
            z = untied ? iterate_untied(spec, x, depth, s) : solve_closed_form(sample(spec, s), x);
        } catch (const SingularMatrixError&) {
            return;
        }
        if (!z.allFinite()) return;
        const double xx = x.squaredNorm();
        if (xx > 0.0) {
            factor[r] = (z.squaredNorm() - xx) / xx;
            ratio[r] = x.dot(z) / xx;
        } else {
            factor[r] = 0.0;
            ratio[r] = 1.0;
        }
        if (problem.input_mode == InputMode::FixedVector) solutions[r] = std::move(z);
    });

    MomentEstimate out;
    out.variance_factor.query = {spec.family, problem.weight_mode, spec.scale, MomentQuantity::VarianceFactor};
    out.variance_factor.theory_value = theory_or_nan(out.variance_factor.query);
    fill_mc(out.variance_factor, factor);
    if (out.variance_factor.n_diverged == n_seeds)
        throw InvalidArgument("estimate_moments: every seed diverged");

    RunningStats ratio_stats;
    for (double v : ratio)
        if (std::isfinite(v)) ratio_stats.add(v);
    out.mean_ratio = ratio_stats.mean();
    out.mean_ratio_stderr = ratio_stats.std_error();

    if (problem.input_mode == InputMode::FixedVector) {
        Vector sum = Vector::Zero(n), sum_sq = Vector::Zero(n);
        double count = 0.0;
        for (std::size_t r = 0; r < n_seeds; ++r) {
            if (!std::isfinite(factor[r])) continue;
            sum += solutions[r];
            sum_sq += solutions[r].cwiseAbs2();
            count += 1.0;
        }
        out.coordinate_mean = sum / count;
        if (count > 1.0) {
            Vector var = (sum_sq - count * out.coordinate_mean.cwiseAbs2()) / (count - 1.0);
            out.coordinate_stderr = (var.cwiseMax(0.0) / count).cwiseSqrt();
        } else {
            out.coordinate_stderr = Vector::Constant(n, kNaN);
        }
    }
    return out;
}

MomentReport estimate_length_variance(const EnsembleSpec& spec, WeightMode mode, std::size_t n_seeds,
                                      const SeedDerivation& seed, const LengthVarianceOptions& options) {
    std::vector<double> per_seed;
    return estimate_length_variance(spec, mode, n_seeds, seed, options, per_seed);
}

MomentReport estimate_length_variance(const EnsembleSpec& spec, WeightMode mode, std::size_t n_seeds,
                                      const SeedDerivation& seed, const LengthVarianceOptions& options,
                                      std::vector<double>& per_seed) {
    spec.validate();
    if (n_seeds == 0) throw InvalidArgument("estimate_length_variance: need at least one seed");
    const bool untied = mode == WeightMode::Untied;
    if (untied && spec.scale >= 1.0)
        throw DivergenceError("estimate_length_variance: untied series diverges for V >= 1", 1.0);
    const std::size_t depth = untied ? untied_truncation_depth(spec.scale) : 0;
    const auto n = static_cast<Eigen::Index>(spec.dim);
    const double nd = static_cast<double>(spec.dim);

    per_seed.assign(n_seeds, kNaN);
    parallel_for(n_seeds, options.threads, [&](std::size_t r) {
        const auto s = seed.with_replicate(r);
        if (!untied) {
            try {
                per_seed[r] = gram_inverse_sq_trace(identity_minus(sample(spec, s)), options.estimator,
                                                    options.probes, s)
                                  .value;
            } catch (const SingularMatrixError&) {
            }
            return;
        }
        Matrix m = Matrix::Identity(n, n);
        Matrix p = Matrix::Identity(n, n);
        Matrix tmp(n, n);
        for (std::size_t k = 0; k < depth; ++k) {
            tmp.noalias() = p * sample(spec, s, StreamPurpose::UntiedStep, static_cast<std::uint32_t>(k));
            p.swap(tmp);
            m += p;
        }
        Matrix gram(n, n);
        gram.setZero();
        gram.selfadjointView<Eigen::Lower>().rankUpdate(m.transpose());
        double sq = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            sq += gram(j, j) * gram(j, j);
            for (Eigen::Index i = j + 1; i < n; ++i) sq += 2.0 * gram(i, j) * gram(i, j);
        }
        const double value = sq / nd;
        if (std::isfinite(value)) per_seed[r] = value;
    });

    MomentReport report;
    report.query = {spec.family, mode, spec.scale, MomentQuantity::LengthVarianceT};
    report.theory_value = theory_or_nan(report.query);
    fill_mc(report, per_seed);
    return report;
}

double convergence_bound_rhs(double scale, std::size_t t, double x_dot_x) {
    if (!(scale >= 0.0 && scale < 1.0)) throw InvalidArgument("convergence bound: V must be in [0, 1)");
    const double td = static_cast<double>(t);
    return 2.0 * td / (1.0 - scale) * x_dot_x * std::pow(scale, td + 1.0);
}

ConvergenceBoundRecord check_convergence_bound(const Matrix& w, const Vector& x, std::size_t t, double scale) {
    ConvergenceBoundRecord rec;
    rec.rhs = convergence_bound_rhs(scale, t, x.squaredNorm());
    Vector z_star;
    try {
        z_star = solve_closed_form(w, x);
    } catch (const SingularMatrixError&) {
        rec.diverged = true;
        rec.lhs = kNaN;
        return rec;
    }
    Vector z = Vector::Zero(x.size());
    for (std::size_t k = 0; k < t; ++k) z = w * z + x;
    if (!z.allFinite() || !z_star.allFinite()) {
        rec.diverged = true;
        rec.lhs = kNaN;
        return rec;
    }
    rec.lhs = (z_star - z).cwiseAbs2().maxCoeff();
    rec.holds = rec.lhs <= rec.rhs;
    return rec;
}

LinearKernelRecord linear_kernels(const EnsembleSpec& spec, const Vector& x, const Vector& x_prime,
                                  std::size_t n_seeds, const SeedDerivation& seed, unsigned threads) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(spec.dim);
    if (x.size() != n || x_prime.size() != n) throw InvalidArgument("linear_kernels: input dimension mismatch");
    if (n_seeds == 0) throw InvalidArgument("linear_kernels: need at least one seed");
    const double xx = x.dot(x_prime);
    const double nd = static_cast<double>(spec.dim);

    std::vector<double> nngp(n_seeds, kNaN), ntk(n_seeds, kNaN);
    parallel_for(n_seeds, threads, [&](std::size_t r) {
        const auto s = seed.with_replicate(r);
        const Matrix a = identity_minus(sample(spec, s));
        const Vector v = sample_gaussian_vector(spec.dim, 1.0 / nd, s, StreamPurpose::Readout);
        Matrix rhs(n, 2);
        rhs.col(0) = x;
        rhs.col(1) = x_prime;
        try {
            const Matrix z = solve_linear(a, rhs);
            const Vector adj = solve_linear(Matrix(a.transpose()), v);
            const double zz = z.col(0).dot(z.col(1));
            nngp[r] = zz / nd;
            ntk[r] = adj.squaredNorm() * zz;
        } catch (const SingularMatrixError&) {
        }
    });

    LinearKernelRecord rec;
    rec.n_seeds = n_seeds;
    RunningStats s_nngp, s_ntk;
    for (std::size_t r = 0; r < n_seeds; ++r) {
        if (!std::isfinite(nngp[r]) || !std::isfinite(ntk[r])) {
            ++rec.n_diverged;
            continue;
        }
        s_nngp.add(nngp[r]);
        s_ntk.add(ntk[r]);
    }
    rec.nngp_empirical = s_nngp.mean();
    rec.nngp_stderr = s_nngp.std_error();
    rec.ntk_empirical = s_ntk.mean();
    rec.ntk_stderr = s_ntk.std_error();
    if (xx != 0.0) {
        rec.ntk_factor_empirical = rec.ntk_empirical / xx;
        rec.ntk_factor_stderr = rec.ntk_stderr / std::abs(xx);
    } else {
        rec.ntk_factor_empirical = kNaN;
        rec.ntk_factor_stderr = kNaN;
    }
    try {
        const double g = gram_trace_factor_theory(spec.family, WeightMode::Tied, spec.scale);
        rec.ntk_theory_factor = g * g;
    } catch (const DivergenceError&) {
        rec.ntk_theory_factor = kNaN;
    }
    return rec;
}

}  // namespace deqlab
