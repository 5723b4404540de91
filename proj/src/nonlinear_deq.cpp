#include "deqlab/nonlinear_deq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deqlab/errors.hpp"
#include "deqlab/train_probe.hpp"

namespace deqlab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kResidualClip = 1e6;

}  // namespace

FixedPointResult iterate_h(const Matrix& w, const Vector& x, const Nonlinearity& phi, std::size_t t_max, double tol,
                           const std::optional<Vector>& h0, bool stop_early) {
    if (w.rows() != w.cols() || w.rows() != x.size()) throw InvalidArgument("iterate_h: dimension mismatch");
    require_finite(x, "iterate_h x");
    require_finite(w, "iterate_h W");
    Vector h = h0 ? *h0 : Vector::Zero(x.size());
    if (h.size() != x.size()) throw InvalidArgument("iterate_h: h0 has the wrong dimension");

    const double root_n = std::sqrt(static_cast<double>(x.size()));
    const double blowup = divergence_threshold(x);
    FixedPointResult result;
    Vector next(x.size());
    for (std::size_t t = 0; t < t_max; ++t) {
        next.noalias() = w * (phi.apply(h) + x);
        const double res = (next - h).norm() / root_n;
        result.final_residual = res;
        if (!std::isfinite(res) || res > blowup) {
            result.diverged = true;
            result.iterations = t + 1;
            result.solution = std::move(next);
            return result;
        }
        if (stop_early && res <= tol) {
            result.converged = true;
            result.iterations = t;
            result.solution = std::move(h);
            return result;
        }
        h.swap(next);
        result.iterations = t + 1;
    }
    result.converged = result.final_residual <= tol;
    result.solution = std::move(h);
    return result;
}

BatchedFixedPoint iterate_h_batched(const Matrix& w_unit, const Vector& x, const Nonlinearity& phi,
                                    std::span<const double> sqrt_scales, std::size_t t_max, double tol,
                                    bool stop_early) {
    if (w_unit.rows() != w_unit.cols() || w_unit.rows() != x.size())
        throw InvalidArgument("iterate_h_batched: dimension mismatch");
    const auto n = x.size();
    const auto g = static_cast<Eigen::Index>(sqrt_scales.size());
    const double root_n = std::sqrt(static_cast<double>(n));
    const double blowup = divergence_threshold(x);
    Eigen::RowVectorXd s(g);
    for (Eigen::Index j = 0; j < g; ++j) s[j] = sqrt_scales[static_cast<std::size_t>(j)];

    BatchedFixedPoint out;
    out.h = Matrix::Zero(n, g);
    out.residual.assign(sqrt_scales.size(), 0.0);
    out.iterations.assign(sqrt_scales.size(), 0);
    out.converged.assign(sqrt_scales.size(), false);
    out.diverged.assign(sqrt_scales.size(), false);
    std::vector<bool> done(sqrt_scales.size(), false);

    Matrix h = Matrix::Zero(n, g), p(n, g), next(n, g);
    std::size_t remaining = sqrt_scales.size();
    for (std::size_t t = 0; t < t_max && remaining > 0; ++t) {
        p = h;
        phi.apply_inplace(p);
        p.colwise() += x;
        next.noalias() = w_unit * p;
        next.array().rowwise() *= s.array();
        for (Eigen::Index j = 0; j < g; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            if (done[jj]) continue;
            const double res = (next.col(j) - h.col(j)).norm() / root_n;
            out.residual[jj] = res;
            out.iterations[jj] = t + 1;
            if (!std::isfinite(res) || res > blowup) {
                out.diverged[jj] = true;
                done[jj] = true;
                --remaining;
                out.h.col(j) = h.col(j);
                next.col(j).setZero();  // keeps inf/NaN out of later GEMMs
            } else if (stop_early && res <= tol) {
                out.converged[jj] = true;
                out.iterations[jj] = t;
                done[jj] = true;
                --remaining;
                out.h.col(j) = h.col(j);
            }
        }
        h.swap(next);
    }
    for (Eigen::Index j = 0; j < g; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        if (done[jj]) continue;
        out.h.col(j) = h.col(j);
        out.converged[jj] = out.residual[jj] <= tol;
    }
    return out;
}

SelfConsistentState sigma_h_selfconsistent(double scale, double sigma_x2, double mean_x, const Nonlinearity& phi) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("sigma_h_selfconsistent: V must be >= 0");
    if (!(sigma_x2 >= 0.0) || !std::isfinite(sigma_x2))
        throw InvalidArgument("sigma_h_selfconsistent: sigma_x^2 must be >= 0");
    if (!std::isfinite(mean_x)) throw InvalidArgument("sigma_h_selfconsistent: mean_x must be finite");

    const auto kinks = phi.kinks();
    SelfConsistentState st;
    st.scale = scale;
    st.sigma_x2 = sigma_x2;
    st.mean_x = mean_x;

    auto evaluate = [&](double s) {
        st.sigma_phi2 = gauss_hermite_expect([&](double h) { return phi(h) * phi(h); }, 0.0, s, kinks);
        st.c_x_phi = mean_x == 0.0 ? 0.0 : mean_x * gauss_hermite_expect(phi, 0.0, s, kinks);
        return scale * (st.sigma_phi2 + 2.0 * st.c_x_phi + sigma_x2);
    };

    constexpr double alpha = 0.5;
    double s = scale * sigma_x2;
    for (std::size_t it = 1; it <= 10000; ++it) {
        const double target = evaluate(s);
        const double res = std::abs(target - s);
        st.iterations = it;
        st.residual = res;
        if (!std::isfinite(target))
            throw ConvergenceError("sigma_h_selfconsistent: iteration overflowed", s);
        if (res <= 1e-10 * std::max(std::abs(target), 1e-300) || res == 0.0) {
            st.sigma_h2 = target;
            evaluate(target);
            st.p = gauss_hermite_expect(
                [&](double h) {
                    const double d = phi.derivative(h);
                    return d * d;
                },
                0.0, target, kinks);
            return st;
        }
        s = (1.0 - alpha) * s + alpha * target;
    }
    throw ConvergenceError("sigma_h_selfconsistent: no fixed point after 10^4 damped steps (V=" +
                               std::to_string(scale) + ")",
                           s);
}

double radius_theory(Family family, double scale, const Nonlinearity& phi, double sigma_h2) {
    if (!(scale >= 0.0)) throw InvalidArgument("radius_theory: V must be >= 0");
    if (!(sigma_h2 >= 0.0)) throw InvalidArgument("radius_theory: sigma_h^2 must be >= 0");
    const auto kinks = phi.kinks();
    const double p = gauss_hermite_expect(
        [&](double h) {
            const double d = phi.derivative(h);
            return d * d;
        },
        0.0, sigma_h2, kinks);
    if (family != Family::GOE) return std::sqrt(scale * p);
    if (phi.tag() == Activation::Tanh)
        throw InvalidArgument("radius_theory: GOE with tanh requires numerical free convolution (unsupported)");
    return 2.0 * std::sqrt(scale * p);
}

double radius_empirical(const Matrix& w, const Vector& h, const Nonlinearity& phi, double tol) {
    if (w.rows() != w.cols() || w.rows() != h.size()) throw InvalidArgument("radius_empirical: dimension mismatch");
    require_finite(w, "radius_empirical W");
    require_finite(h, "radius_empirical h");
    const Vector d = phi.derivative(h);
    const bool symmetric = w == w.transpose();
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (symmetric && d[i] < 0.0) throw InvalidArgument("radius_empirical: phi' < 0 on the symmetric path");
        if (d[i] != 0.0) active.push_back(i);
    }
    if (active.empty()) return 0.0;
    const auto k = static_cast<Eigen::Index>(active.size());
    Matrix b(k, k);
    if (symmetric) {
        Vector root(k);
        for (Eigen::Index a = 0; a < k; ++a) root[a] = std::sqrt(d[active[a]]);
        for (Eigen::Index j = 0; j < k; ++j)
            for (Eigen::Index i = 0; i < k; ++i) b(i, j) = root[i] * w(active[i], active[j]) * root[j];
        const auto ev = sym_spectrum(b);
        return std::max(std::abs(ev.front()), std::abs(ev.back()));
    }
    for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < k; ++i) b(i, j) = w(active[i], active[j]) * d[active[j]];
    return spectral_radius_estimate(b, tol);
}

double predict_critical_V(Family family, const Nonlinearity& phi, double sigma_x2, double mean_x, double lo,
                          double hi) {
    if (!(lo > 0.0 && hi > lo)) throw InvalidArgument("predict_critical_V: need 0 < lo < hi");
    auto radius_at = [&](double root) {
        const double v = root * root;
        if (phi.tag() == Activation::Identity) return radius_theory(family, v, phi, 0.0);
        try {
            const auto st = sigma_h_selfconsistent(v, sigma_x2, mean_x, phi);
            return radius_theory(family, v, phi, st.sigma_h2);
        } catch (const ConvergenceError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const double r_lo = radius_at(lo);
    const double r_hi = radius_at(hi);
    if (!(r_lo < 1.0 && r_hi > 1.0))
        throw InvalidArgument("predict_critical_V: radius does not cross 1 on [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "] (r=" + std::to_string(r_lo) + ", " + std::to_string(r_hi) +
                              ")");
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        (radius_at(mid) < 1.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<ResidualCell> residual_sweep(std::span<const Family> families, std::span<const double> sqrt_grid,
                                         std::size_t n, std::size_t n_seeds, std::size_t t_probe,
                                         const Nonlinearity& phi, const SeedDerivation& seed, unsigned threads) {
    if (n == 0 || n_seeds == 0) throw InvalidArgument("residual_sweep: need N >= 1 and at least one seed");
    for (std::size_t i = 1; i < sqrt_grid.size(); ++i)
        if (!(sqrt_grid[i] > sqrt_grid[i - 1])) throw InvalidArgument("residual_sweep: grid must be ascending");
    const std::size_t nf = families.size(), ng = sqrt_grid.size();
    // residual[f][r][g]; NaN marks divergence.
    std::vector<double> residual(nf * n_seeds * ng, kNaN);
    parallel_for(nf * n_seeds, threads, [&](std::size_t task) {
        const std::size_t f = task / n_seeds, r = task % n_seeds;
        const Family fam = families[f];
        const Matrix w = sample({fam, n, 1.0}, seed.with_family(family_tag(fam)).with_replicate(r));
        const Vector x = sample_gaussian_vector(n, 1.0, seed.with_replicate(r), StreamPurpose::Input);
        const auto run = iterate_h_batched(w, x, phi, sqrt_grid, t_probe, 0.0, false);
        for (std::size_t g = 0; g < ng; ++g)
            residual[(f * n_seeds + r) * ng + g] = run.diverged[g] ? kNaN : run.residual[g];
    });

    std::vector<ResidualCell> cells;
    for (std::size_t f = 0; f < nf; ++f) {
        double critical = kNaN;
        try {
            critical = predict_critical_V(families[f], phi, 1.0);
        } catch (const Error&) {
        }
        for (std::size_t g = 0; g < ng; ++g) {
            ResidualCell cell;
            cell.family = families[f];
            cell.sqrt_scale = sqrt_grid[g];
            cell.n_seeds = n_seeds;
            cell.predicted_critical = critical;
            std::vector<double> values(n_seeds);
            for (std::size_t r = 0; r < n_seeds; ++r) {
                const double v = residual[(f * n_seeds + r) * ng + g];
                if (!std::isfinite(v)) ++cell.n_diverged;
                values[r] = std::isfinite(v) ? std::min(v, kResidualClip) : kResidualClip;
            }
            cell.residual = summarize(values);
            cells.push_back(cell);
        }
    }
    return cells;
}

NonlinearNtkRecord ntk_nonlinear_empirical(const EnsembleSpec& spec, const Vector& x, const Vector& x_prime,
                                           const Nonlinearity& phi, std::size_t n_seeds, const SeedDerivation& seed,
                                           unsigned threads) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(spec.dim);
    if (x.size() != n || x_prime.size() != n) throw InvalidArgument("ntk_nonlinear_empirical: dimension mismatch");
    if (n_seeds == 0) throw InvalidArgument("ntk_nonlinear_empirical: need at least one seed");
    const double nd = static_cast<double>(spec.dim);

    std::vector<double> theta(n_seeds, kNaN);
    parallel_for(n_seeds, threads, [&](std::size_t r) {
        const auto s = seed.with_replicate(r);
        const Matrix w = sample(spec, s);
        const Vector v = sample_gaussian_vector(spec.dim, 1.0 / nd, s, StreamPurpose::Readout);
        const auto a = deq_forward(w, x, phi);
        const auto b = deq_forward(w, x_prime, phi);
        if (!a.converged || !b.converged) return;
        try {
            const Vector ga = deq_adjoint(w, a.h, phi, v);
            const Vector gb = deq_adjoint(w, b.h, phi, v);
            theta[r] = ga.dot(gb) * a.z.dot(b.z);
        } catch (const SingularMatrixError&) {
        }
    });

    NonlinearNtkRecord rec;
    rec.n_seeds = n_seeds;
    RunningStats stats;
    for (double t : theta) {
        if (std::isfinite(t))
            stats.add(t);
        else
            ++rec.n_diverged;
    }
    if (stats.count() == 0) throw InvalidArgument("ntk_nonlinear_empirical: every seed diverged");
    rec.ntk_mean = stats.mean();
    rec.ntk_stderr = stats.std_error();
    const double xx = x.dot(x_prime);
    rec.ntk_factor = xx != 0.0 ? rec.ntk_mean / xx : kNaN;
    rec.ntk_factor_stderr = xx != 0.0 ? rec.ntk_stderr / std::abs(xx) : kNaN;
    return rec;
}

}  // namespace deqlab
