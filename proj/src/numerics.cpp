#include "deqlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "deqlab/errors.hpp"

namespace deqlab {
namespace {

constexpr double kResidualTol = 1e-10;

void require_square(const Matrix& a, const char* what) {
    if (a.rows() != a.cols() || a.rows() == 0)
        throw InvalidArgument(std::string(what) + ": expected a non-empty square matrix");
}

Eigen::PartialPivLU<Matrix> factorize(const Matrix& a, const char* what) {
    require_square(a, what);
    require_finite(a, what);
    Eigen::PartialPivLU<Matrix> lu(a);
    const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
    const double max_pivot = pivots.maxCoeff();
    const double min_pivot = pivots.minCoeff();
    if (!(min_pivot > 0.0) || lu.rcond() < 1e-14 || min_pivot < 1e-15 * max_pivot)
        throw SingularMatrixError(std::string(what) + ": matrix is singular to working precision");
    return lu;
}

template <class Rhs>
Rhs refined_solve(const Eigen::PartialPivLU<Matrix>& lu, const Matrix& a, const Rhs& b) {
    Rhs x = lu.solve(b);
    const double b_norm = b.norm();
    Rhs r = b - a * x;
    if (r.norm() > kResidualTol * b_norm) {
        x += lu.solve(r);
        r = b - a * x;
        if (r.norm() > kResidualTol * b_norm)
            throw SingularMatrixError("solve_linear: residual above 1e-10 after refinement (ill-conditioned system)");
    }
    if (!x.allFinite()) throw SingularMatrixError("solve_linear: non-finite solution");
    return x;
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return s;
}

const QuadratureRule& hermite96() {
    static const QuadratureRule rule = gauss_hermite_rule(96);
    return rule;
}

const QuadratureRule& legendre32() {
    static const QuadratureRule rule = gauss_legendre_rule(32);
    return rule;
}

QuadratureRule golub_welsch(const Vector& off_diagonal, double total_weight) {
    const Eigen::Index n = off_diagonal.size() + 1;
    Matrix jacobi = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
        jacobi(k, k + 1) = off_diagonal[k];
        jacobi(k + 1, k) = off_diagonal[k];
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        rule.nodes[i] = es.eigenvalues()[i];
        const double v0 = es.eigenvectors()(0, i);
        rule.weights[i] = total_weight * v0 * v0;
    }
    // Exact symmetry about 0 removes eigensolver noise from odd moments.
    for (Eigen::Index i = 0; i < n / 2; ++i) {
        const Eigen::Index j = n - 1 - i;
        const double node = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        const double weight = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -node;
        rule.nodes[j] = node;
        rule.weights[i] = rule.weights[j] = weight;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

}  // namespace

void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite entries");
}

void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite entries");
}

// ---------------------------------------------------------------------------

double SpectralDensity::atom_mass() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.mass;
    return s;
}

double SpectralDensity::continuous_mass() const { return trapezoid(grid, density); }

double SpectralDensity::moment(int k) const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.mass * std::pow(a.location, k);
    std::vector<double> weighted(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) weighted[i] = std::pow(grid[i], k) * density[i];
    return s + trapezoid(grid, weighted);
}

namespace {

double continuous_cumulative(const std::vector<double>& x, const std::vector<double>& y, double at) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (at <= x[i - 1]) break;
        const double h = x[i] - x[i - 1];
        if (at >= x[i]) {
            s += 0.5 * h * (y[i] + y[i - 1]);
        } else {
            const double t = at - x[i - 1];
            const double slope = (y[i] - y[i - 1]) / h;
            s += t * y[i - 1] + 0.5 * slope * t * t;
            break;
        }
    }
    return s;
}

}  // namespace

double SpectralDensity::cdf(double x) const {
    double s = 0.0;
    for (const auto& a : atoms)
        if (a.location <= x) s += a.mass;
    return s + continuous_cumulative(grid, density, x);
}

double SpectralDensity::continuous_cdf(double x) const {
    const double mass = continuous_mass();
    if (!(mass > 0.0)) throw InvalidArgument("continuous_cdf: density has no continuous part");
    return continuous_cumulative(grid, density, x) / mass;
}

void SpectralDensity::validate(double tol) const {
    if (grid.size() != density.size()) throw InvalidArgument("SpectralDensity: grid/density size mismatch");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw InvalidArgument("SpectralDensity: grid must be strictly ascending");
    for (double d : density)
        if (!(d >= 0.0)) throw InvalidArgument("SpectralDensity: negative or NaN density");
    for (const auto& a : atoms)
        if (!(a.mass >= 0.0 && a.mass <= 1.0)) throw InvalidArgument("SpectralDensity: atom mass outside [0,1]");
    if (std::abs(total_mass() - 1.0) > tol)
        throw InvalidArgument("SpectralDensity: total mass " + std::to_string(total_mass()) + " differs from 1");
}

double kolmogorov_distance(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw InvalidArgument("kolmogorov_distance: empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
    }
    return d;
}

// ---------------------------------------------------------------------------

Matrix solve_linear(const Matrix& a, const Matrix& b) {
    if (b.rows() != a.rows()) throw InvalidArgument("solve_linear: dimension mismatch");
    require_finite(b, "solve_linear rhs");
    const auto lu = factorize(a, "solve_linear");
    return refined_solve(lu, a, b);
}

Vector solve_linear(const Matrix& a, const Vector& b) {
    if (b.size() != a.rows()) throw InvalidArgument("solve_linear: dimension mismatch");
    require_finite(b, "solve_linear rhs");
    const auto lu = factorize(a, "solve_linear");
    return refined_solve(lu, a, b);
}

double gram_inverse_sq_trace(const Matrix& a) {
    const auto lu = factorize(a, "gram_inverse_sq_trace");
    const Matrix inv = lu.inverse();
    if (!inv.allFinite()) throw SingularMatrixError("gram_inverse_sq_trace: non-finite inverse");
    const Eigen::Index n = a.rows();
    Matrix gram = Matrix::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(inv);
    // |G|_F^2 from the lower triangle of the symmetric G.
    double off = 0.0, diag = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        diag += gram(j, j) * gram(j, j);
        off += gram.col(j).tail(n - j - 1).squaredNorm();
    }
    return (diag + 2.0 * off) / static_cast<double>(n);
}

TraceEstimate gram_inverse_sq_trace_hutchinson(const Matrix& a, std::size_t probes, const SeedDerivation& seed) {
    if (probes < 2) throw InvalidArgument("gram_inverse_sq_trace_hutchinson: need at least 2 probes");
    const auto lu = factorize(a, "gram_inverse_sq_trace_hutchinson");
    const Eigen::Index n = a.rows();
    RandomStream stream(seed, StreamPurpose::Probe);
    Matrix u(n, static_cast<Eigen::Index>(probes));
    for (Eigen::Index j = 0; j < u.cols(); ++j)
        for (Eigen::Index i = 0; i < n; ++i) u(i, j) = stream.rademacher();
    const Matrix w = lu.transpose().solve(u);
    const Matrix y = lu.solve(w);
    const Vector samples = y.colwise().squaredNorm().transpose() / static_cast<double>(n);
    const double mean = samples.mean();
    const double var = (samples.array() - mean).square().sum() / static_cast<double>(probes - 1);
    return {mean, std::sqrt(var / static_cast<double>(probes)), probes};
}

TraceEstimate gram_inverse_sq_trace(const Matrix& a, TraceEstimator estimator, std::size_t probes,
                                    const SeedDerivation& seed) {
    if (estimator == TraceEstimator::Exact) return {gram_inverse_sq_trace(a), 0.0, 0};
    return gram_inverse_sq_trace_hutchinson(a, probes, seed);
}

std::vector<double> sym_spectrum(const Matrix& s) {
    require_square(s, "sym_spectrum");
    require_finite(s, "sym_spectrum");
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw InvalidArgument("sym_spectrum: input is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw Error("sym_spectrum: eigensolver failed");
    const Vector& ev = es.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

double spectral_radius_estimate(const Matrix& m, double tol) {
    require_square(m, "spectral_radius_estimate");
    require_finite(m, "spectral_radius_estimate");
    if (!(tol > 0.0)) throw InvalidArgument("spectral_radius_estimate: tol must be positive");

    constexpr int kMaxSquarings = 60;
    Matrix a = m;
    double log_scale = 0.0;  // M^(2^j) = exp(log_scale) * a
    double prev_log_norm = 0.0;
    double prev_estimate = -1.0;
    double estimate = 0.0;
    for (int j = 0; j <= kMaxSquarings; ++j) {
        const double s = a.norm();
        if (s == 0.0) return 0.0;  // nilpotent
        const double log_norm = log_scale + std::log(s);
        a /= s;
        if (j > 0) {
            estimate = std::exp((log_norm - prev_log_norm) / std::ldexp(1.0, j - 1));
            if (prev_estimate >= 0.0 && std::abs(estimate - prev_estimate) <= 0.25 * tol * std::max(estimate, 0.1))
                return estimate;
            prev_estimate = estimate;
        }
        prev_log_norm = log_norm;
        log_scale = 2.0 * log_norm;
        a = (a * a).eval();
    }
    return estimate;
}

// ---------------------------------------------------------------------------

QuadratureRule gauss_hermite_rule(std::size_t n) {
    if (n < 2) throw InvalidArgument("gauss_hermite_rule: need at least 2 nodes");
    Vector off(static_cast<Eigen::Index>(n - 1));
    for (Eigen::Index k = 0; k < off.size(); ++k) off[k] = std::sqrt(static_cast<double>(k + 1));
    return golub_welsch(off, 1.0);
}

QuadratureRule gauss_legendre_rule(std::size_t n) {
    if (n < 2) throw InvalidArgument("gauss_legendre_rule: need at least 2 nodes");
    Vector off(static_cast<Eigen::Index>(n - 1));
    for (Eigen::Index k = 0; k < off.size(); ++k) {
        const double kk = static_cast<double>(k + 1);
        off[k] = kk / std::sqrt(4.0 * kk * kk - 1.0);
    }
    return golub_welsch(off, 2.0);
}

double gauss_hermite_expect(const std::function<double(double)>& f, double mean, double variance,
                            std::span<const double> breakpoints) {
    if (!(variance >= 0.0)) throw InvalidArgument("gauss_hermite_expect: variance must be non-negative");
    if (!std::isfinite(mean) || !std::isfinite(variance)) throw InvalidArgument("gauss_hermite_expect: non-finite moments");
    if (variance == 0.0) return f(mean);
    const double sd = std::sqrt(variance);

    if (breakpoints.empty()) {
        const auto& rule = hermite96();
        double s = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(mean + sd * rule.nodes[i]);
        return s;
    }

    constexpr double kTail = 14.0;
    const double lo = mean - kTail * sd;
    const double hi = mean + kTail * sd;
    std::vector<double> cuts{lo};
    std::vector<double> inner(breakpoints.begin(), breakpoints.end());
    std::sort(inner.begin(), inner.end());
    for (double b : inner)
        if (b > lo && b < hi && b > cuts.back()) cuts.push_back(b);
    cuts.push_back(hi);

    const auto& rule = legendre32();
    const double norm = 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
    double total = 0.0;
    for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
        const double a = cuts[seg];
        const double b = cuts[seg + 1];
        const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / sd)));
        const double width = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            const double mid = a + (p + 0.5) * width;
            const double half = 0.5 * width;
            double s = 0.0;
            for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
                const double h = mid + half * rule.nodes[i];
                const double z = (h - mean) / sd;
                s += rule.weights[i] * f(h) * std::exp(-0.5 * z * z);
            }
            total += s * half;
        }
    }
    return total * norm;
}

}  // namespace deqlab
