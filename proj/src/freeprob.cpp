#include "deqlab/freeprob.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "deqlab/analytic_moments.hpp"
#include "deqlab/errors.hpp"

namespace deqlab {
namespace {

void require_goe_scale(double scale, const char* who) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument(std::string(who) + ": V must be >= 0");
    if (scale >= 0.25) throw DivergenceError(std::string(who) + ": V must be below 1/4", 0.25);
}

template <class T>
std::vector<T> random_gram_recursion(const T& v, std::size_t k_max) {
    // Coefficient of w^n in the cubic gives m_{n-1} from m_1..m_{n-2}.
    std::vector<T> m(k_max + 1, T(0));
    std::vector<T> sq(k_max + 2, T(0));  // [M^2]_j
    const T one_minus = T(1) - v;
    for (std::size_t n = 2; n <= k_max + 1; ++n) {
        const std::size_t j = n - 1;
        sq[j] = T(0);
        for (std::size_t a = 1; a < j; ++a) sq[j] += m[a] * m[j - a];
        T cube = T(0);
        for (std::size_t a = 1; a + 2 <= n; ++a) {
            T inner = T(0);
            const std::size_t rest = n - a;
            for (std::size_t b = 1; b < rest; ++b) inner += m[b] * m[rest - b];
            cube += m[a] * inner;
        }
        T num = v * v * cube + T(2) * v * sq[j] + m[n - 2];
        if (n == 2) num += T(1);
        m[j] = num / one_minus;
    }
    return m;
}

}  // namespace

Complex PowerSeries::evaluate(Complex z) const {
    const Complex w = 1.0 / z;
    Complex sum = 0.0;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) sum = sum * w + *it;
    return sum;
}

PowerSeries ExactPowerSeries::to_double() const {
    PowerSeries out;
    out.coefficients.reserve(coefficients.size());
    for (const auto& c : coefficients) out.coefficients.push_back(static_cast<double>(c));
    return out;
}

Complex semicircle_stieltjes(Complex z, double scale) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("semicircle_stieltjes: V must be >= 0");
    const double a = 2.0 * std::sqrt(scale);
    if (z.imag() == 0.0 && std::abs(z.real()) <= a)
        throw InvalidArgument("semicircle_stieltjes: z lies on the support");
    if (scale == 0.0) return 1.0 / z;
    // Rationalised: (z - s)/(2V) = 2 / (z + s), no cancellation at large |z|.
    const Complex s = std::sqrt(z - a) * std::sqrt(z + a);
    return 2.0 / (z + s);
}

PowerSeries goe_resolvent_mgf(double scale, std::size_t k_max) {
    require_goe_scale(scale, "goe_resolvent_mgf");
    PowerSeries out;
    out.coefficients.assign(k_max + 1, 0.0);
    if (k_max == 0) return out;
    std::vector<double> n(k_max, 0.0);
    n[0] = catalan_generating(scale);
    const double root = std::sqrt(1.0 - 4.0 * scale);
    for (std::size_t j = 1; j < k_max; ++j) {
        double conv = 0.0;
        for (std::size_t a = 1; a < j; ++a) conv += n[a] * n[j - a];
        n[j] = (n[j - 1] + scale * conv) / root;
    }
    for (std::size_t k = 1; k <= k_max; ++k) out.coefficients[k] = n[k - 1];
    return out;
}

Complex goe_resolvent_mgf_closed(Complex z, double scale) {
    require_goe_scale(scale, "goe_resolvent_mgf_closed");
    const double r = 2.0 * std::sqrt(scale);
    const double lo = 1.0 / (1.0 + r);
    const double hi = 1.0 / (1.0 - r);
    if (z.imag() == 0.0 && z.real() >= lo && z.real() <= hi)
        throw InvalidArgument("goe_resolvent_mgf_closed: z lies on the branch cut");
    const Complex s = std::sqrt(1.0 - 4.0 * scale) * std::sqrt(z - hi) * std::sqrt(z - lo);
    return 2.0 / ((z - 1.0) + s);
}

double goe_gram_second_moment_fd(double scale) {
    require_goe_scale(scale, "goe_gram_second_moment_fd");
    using Big = boost::multiprecision::cpp_bin_float_50;
    const Big v(scale);
    auto f = [&v](const Big& w) {
        const Big u = Big(1) - w;
        return Big(2) * w / (u + sqrt(u * u - Big(4) * v));
    };
    // The series in w converges for |w| < 1 - 2 sqrt(V); keep the stencil well inside.
    const double radius = 1.0 - 2.0 * std::sqrt(scale);
    const Big h0(std::min(1e-3, radius / 64.0));
    auto d4 = [&f](const Big& h) {
        const Big h2 = h * h;
        return (f(-2 * h) - 4 * f(-h) + 6 * f(Big(0)) - 4 * f(h) + f(2 * h)) / (h2 * h2);
    };
    const Big rich = (4 * d4(h0 / 2) - d4(h0)) / 3;
    return static_cast<double>(rich / 24);
}

double goe_gram_second_moment(double scale) {
    require_goe_scale(scale, "goe_gram_second_moment");
    const double a = 1.0 - 4.0 * scale;
    const double printed =
        scale < 1e-4 ? std::pow(a, -2.5) : (std::pow(a, -2.5) - std::pow(a, -1.5)) / (4.0 * scale);
    const double fd = goe_gram_second_moment_fd(scale);
    if (std::abs(printed - fd) > 1e-6 * std::abs(printed))
        throw Error("goe_gram_second_moment: closed form " + std::to_string(printed) +
                    " disagrees with the derivative route " + std::to_string(fd));
    return printed;
}

PowerSeries random_gram_moment_series(double scale, std::size_t k_max) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("random_gram_moment_series: V must be >= 0");
    if (scale >= 1.0) throw DivergenceError("random_gram_moment_series: V must be below 1", 1.0);
    if (k_max < 1) throw InvalidArgument("random_gram_moment_series: k_max must be >= 1");
    return PowerSeries{random_gram_recursion<double>(scale, k_max)};
}

ExactPowerSeries random_gram_moment_series(const Rational& scale, std::size_t k_max) {
    if (scale < 0) throw InvalidArgument("random_gram_moment_series: V must be >= 0");
    if (scale >= 1) throw DivergenceError("random_gram_moment_series: V must be below 1", 1.0);
    if (k_max < 1) throw InvalidArgument("random_gram_moment_series: k_max must be >= 1");
    return ExactPowerSeries{random_gram_recursion<Rational>(scale, k_max)};
}

Complex hardtanh_stieltjes(Complex z, double p, double scale) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("hardtanh_stieltjes: p must lie in [0, 1]");
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("hardtanh_stieltjes: V must be >= 0");
    if (z == Complex(0.0)) throw InvalidArgument("hardtanh_stieltjes: z = 0 is the atom");
    const double vp = scale * p;
    if (vp == 0.0) return 1.0 / z;
    return (1.0 - p) / z + p * semicircle_stieltjes(z, vp);
}

std::vector<double> support_grid(double lo, double hi, std::size_t n, double widen) {
    if (n < 2) throw InvalidArgument("support_grid: need at least two points");
    if (!(hi > lo)) throw InvalidArgument("support_grid: empty interval");
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo) * widen;
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i)
        grid[i] = mid - half + 2.0 * half * static_cast<double>(i) / static_cast<double>(n - 1);
    // Keep the centre exact so atoms there sit on a node.
    if (n % 2 == 1) grid[n / 2] = mid;
    return grid;
}

SpectralDensity hardtanh_jacobian_density(double p, double scale, std::size_t grid_points) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("hardtanh_jacobian_density: p must lie in [0, 1]");
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("hardtanh_jacobian_density: V must be >= 0");
    SpectralDensity out;
    if (p == 0.0 || scale == 0.0) {
        out.atoms.push_back({0.0, 1.0});
        return out;
    }
    if (p < 1.0) out.atoms.push_back({0.0, 1.0 - p});
    const double radius = 2.0 * std::sqrt(scale * p);
    out.grid = support_grid(-radius, radius, grid_points);
    out.density.resize(out.grid.size());
    const double norm = 2.0 / (std::numbers::pi * radius * radius);
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
        const double x = out.grid[i];
        out.density[i] = p * norm * std::sqrt(std::max(0.0, radius * radius - x * x));
    }
    const double mass = out.continuous_mass();
    for (double& d : out.density) d *= p / mass;
    return out;
}

SpectralDensity density_from_stieltjes(const StieltjesFn& g, const std::vector<double>& grid,
                                       const StieltjesInversionOptions& options) {
    if (grid.size() < 3) throw InvalidArgument("density_from_stieltjes: grid needs at least three points");
    if (!(options.eps1 > 0.0 && options.eps2 > options.eps1))
        throw InvalidArgument("density_from_stieltjes: need 0 < eps1 < eps2");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw InvalidArgument("density_from_stieltjes: grid must be ascending");

    auto eval = [&g](double x, double eps) {
        const Complex v = g(Complex(x, eps));
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw Error("density_from_stieltjes: G is not finite at x=" + std::to_string(x));
        if (v.imag() > 1e-12 * (1.0 + std::abs(v)))
            throw Error("density_from_stieltjes: Herglotz violation (Im G > 0) at x=" + std::to_string(x));
        return v;
    };

    const std::size_t n = grid.size();
    std::vector<double> a1(n), a2(n);
    for (std::size_t i = 0; i < n; ++i) {
        a1[i] = -options.eps1 * eval(grid[i], options.eps1).imag();
        a2[i] = -options.eps2 * eval(grid[i], options.eps2).imag();
    }

    SpectralDensity out;
    const double sharp = options.eps1 / 8.0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool left_ok = i == 0 || a1[i] >= a1[i - 1];
        const bool right_ok = i + 1 == n || a1[i] > a1[i + 1];
        if (!(left_ok && right_ok) || a1[i] < options.atom_threshold) continue;

        double lo = grid[i == 0 ? 0 : i - 1];
        double hi = grid[i + 1 == n ? n - 1 : i + 1];
        auto peak = [&](double x) { return -sharp * eval(x, sharp).imag(); };
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
        double fc = peak(c), fd = peak(d);
        for (int it = 0; it < 100 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
            if (fc > fd) {
                hi = d;
                d = c;
                fd = fc;
                c = hi - phi * (hi - lo);
                fc = peak(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + phi * (hi - lo);
                fd = peak(d);
            }
        }
        double x0 = 0.5 * (lo + hi);
        if (peak(grid[i]) >= peak(x0)) x0 = grid[i];

        // An atom keeps -eps Im G fixed as eps shrinks; a density scales it with eps.
        const double b1 = -options.eps1 * eval(x0, options.eps1).imag();
        const double b2 = -options.eps2 * eval(x0, options.eps2).imag();
        if (b1 < 0.75 * b2 || b1 < options.atom_threshold) continue;
        const double tiny = 1e-6;
        const double mass = -tiny * eval(x0, tiny).imag();
        if (mass >= options.atom_threshold) out.atoms.push_back({x0, mass});
    }

    auto continuous = [&](double x, double eps) {
        const Complex z(x, eps);
        Complex v = g(z);
        for (const auto& atom : out.atoms) v -= atom.mass / (z - atom.location);
        return -v.imag() / std::numbers::pi;
    };
    out.grid = grid;
    out.density.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r1 = continuous(grid[i], options.eps1);
        const double r2 = continuous(grid[i], options.eps2);
        // Linear extrapolation in eps: eps2 = 2 eps1 by default.
        const double t = options.eps1 / (options.eps2 - options.eps1);
        out.density[i] = std::max(0.0, r1 + t * (r1 - r2));
    }
    return out;
}

}  // namespace deqlab
