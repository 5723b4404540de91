#include <doctest.h>

#include <cmath>
#include <numbers>

#include "deqlab/analytic_moments.hpp"
#include "deqlab/errors.hpp"
#include "deqlab/freeprob.hpp"
#include "deqlab/numerics.hpp"

using namespace deqlab;

namespace {
// tr[(I - W)^{-k}] for a semicircle of variance V, by Gauss-Legendre in
// lambda = a sin(theta), which makes the integrand smooth.
double semicircle_resolvent_moment(double v, int k) {
    const double a = 2 * std::sqrt(v);
    const auto rule = gauss_legendre_rule(200);
    double sum = 0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double th = rule.nodes[i] * std::numbers::pi / 2;
        const double lam = a * std::sin(th);
        const double c = std::cos(th);
        const double rho = a * a * c * c / (2 * std::numbers::pi * v);
        sum += rule.weights[i] * rho * std::pow(1 - lam, -k);
    }
    return sum * std::numbers::pi / 2;
}
}  // namespace

TEST_CASE("semicircle Stieltjes transform") {
    const Complex z(50.0, 0.0);
    CHECK(std::abs(semicircle_stieltjes(z, 1.0) * z - 1.0) < 1e-3);
    const Complex below(0.3, -1.0), above(0.3, 1.0);
    CHECK(std::abs(semicircle_stieltjes(below, 0.5) - std::conj(semicircle_stieltjes(above, 0.5))) < 1e-14);
    CHECK(semicircle_stieltjes(above, 0.5).imag() < 0);
    const double rho = -semicircle_stieltjes(Complex(0.4, 1e-9), 1.0).imag() / std::numbers::pi;
    CHECK(rho == doctest::Approx(std::sqrt(4 - 0.16) / (2 * std::numbers::pi)).epsilon(1e-6));
    CHECK_THROWS_AS(semicircle_stieltjes(Complex(0.5, 0.0), 1.0), InvalidArgument);
}

TEST_CASE("GOE resolvent series matches semicircle quadrature") {
    for (double v : {0.05, 0.125, 0.2}) {
        const auto m = goe_resolvent_mgf(v, 6);
        CHECK(m[0] == 0.0);
        CHECK(m[1] == doctest::Approx(catalan_generating(v)).epsilon(1e-12));
        for (int k = 1; k <= 6; ++k) CHECK(m[k] == doctest::Approx(semicircle_resolvent_moment(v, k)).epsilon(1e-9));
    }
}

TEST_CASE("series and closed form of the GOE resolvent MGF agree") {
    const double v = 0.125;
    const auto m = goe_resolvent_mgf(v, 200);
    for (Complex z : {Complex(6.0, 0.0), Complex(4.0, 2.0), Complex(-5.0, 1.0)})
        CHECK(std::abs(m.evaluate(z) - goe_resolvent_mgf_closed(z, v)) < 1e-10);
}

TEST_CASE("GOE gram second moment") {
    CHECK(goe_gram_second_moment(0.125) == doctest::Approx(2.0 * (std::pow(0.5, -2.5) - std::pow(0.5, -1.5))).epsilon(1e-12));
    for (double v : {0.01, 0.1, 0.125, 0.2, 0.24}) {
        const double closed = goe_gram_second_moment(v);
        CHECK(goe_gram_second_moment_fd(v) == doctest::Approx(closed).epsilon(1e-6));
        // For symmetric W the Gram matrix is A^2, so this is tr[A^4].
        CHECK(closed == doctest::Approx(semicircle_resolvent_moment(v, 4)).epsilon(1e-8));
    }
    CHECK(goe_gram_second_moment(1e-6) == doctest::Approx(std::pow(1 - 4e-6, -2.5)).epsilon(1e-9));
    CHECK_THROWS_AS(goe_gram_second_moment(0.25), DivergenceError);
}

TEST_CASE("random gram moment series") {
    const auto m = random_gram_moment_series(0.5, 4);
    CHECK(m[0] == 0.0);
    CHECK(m[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m[2] == doctest::Approx(length_variance_theory(Family::IidGaussian, WeightMode::Tied, 0.5)).epsilon(1e-12));

    const auto exact = random_gram_moment_series(Rational(1, 2), 4);
    CHECK(exact[1] == Rational(2));
    CHECK(exact[2] == Rational(16));
    const auto conv = exact.to_double();
    for (std::size_t k = 0; k <= 4; ++k) CHECK(conv[k] == doctest::Approx(m[k]).epsilon(1e-14));

    for (double v : {0.1, 0.3, 0.7}) {
        const auto s = random_gram_moment_series(v, 2);
        CHECK(s[1] == doctest::Approx(1 / (1 - v)).epsilon(1e-12));
        CHECK(s[2] == doctest::Approx(length_variance_theory(Family::IidGaussian, WeightMode::Tied, v)).epsilon(1e-12));
    }
}

TEST_CASE("random gram moments against Monte-Carlo") {
    // (I - W)^{-1} has heavy-tailed norms, so the higher moment gets a wider band.
    const std::size_t n = 300;
    const double v = 0.3;
    double m2 = 0, m3 = 0;
    const int seeds = 20;
    for (int r = 0; r < seeds; ++r) {
        const Matrix w = sample({Family::IidGaussian, n, v}, SeedDerivation{71, 0, 0, static_cast<std::uint64_t>(r)});
        const Matrix a = solve_linear(Matrix(Matrix::Identity(n, n) - w), Matrix(Matrix::Identity(n, n)));
        const Matrix g = a.transpose() * a;
        const Matrix g2 = g * g;
        m2 += g2.trace() / n;
        m3 += (g2 * g).trace() / n;
    }
    const auto series = random_gram_moment_series(v, 3);
    CHECK(m2 / seeds == doctest::Approx(series[2]).epsilon(0.05));
    CHECK(m3 / seeds == doctest::Approx(series[3]).epsilon(0.10));
}

TEST_CASE("hard-tanh Jacobian spectrum") {
    const auto d = hardtanh_jacobian_density(0.5, 0.2);
    d.validate();
    REQUIRE(d.atoms.size() == 1);
    CHECK(d.atoms[0].location == 0.0);
    CHECK(d.atoms[0].mass == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(d.continuous_mass() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(d.moment(2) == doctest::Approx(0.5 * 0.2 * 0.5).epsilon(1e-3));
    const auto unit = hardtanh_jacobian_density(0.0, 0.2);
    CHECK(unit.atom_mass() == 1.0);
    CHECK_THROWS_AS(hardtanh_jacobian_density(1.5, 0.2), InvalidArgument);
}

TEST_CASE("support grid") {
    const auto g = support_grid(-1, 1, 5, 1.2);
    REQUIRE(g.size() == 5);
    CHECK(g.front() == doctest::Approx(-1.2));
    CHECK(g.back() == doctest::Approx(1.2));
    CHECK(g[2] == 0.0);
}

TEST_CASE("Stieltjes inversion recovers atoms and densities") {
    const double p = 0.5, v = 0.2;
    const double r = 2 * std::sqrt(v * p);
    const auto grid = support_grid(-r, r, 801);
    const auto d = density_from_stieltjes([&](Complex z) { return hardtanh_stieltjes(z, p, v); }, grid);
    REQUIRE(d.atoms.size() == 1);
    CHECK(std::abs(d.atoms[0].location) < 1e-6);
    CHECK(d.atoms[0].mass == doctest::Approx(1 - p).epsilon(1e-4));
    CHECK(d.continuous_mass() == doctest::Approx(p).epsilon(0.01));
    const auto exact = hardtanh_jacobian_density(p, v, 801);
    for (double x : {-0.4, -0.2, 0.1, 0.3}) CHECK(std::abs(d.cdf(x) - exact.cdf(x)) < 0.01);

    const auto sc = density_from_stieltjes([](Complex z) { return semicircle_stieltjes(z, 1.0); }, support_grid(-2, 2, 801));
    CHECK(sc.atoms.empty());
    CHECK(sc.moment(2) == doctest::Approx(1.0).epsilon(0.01));

    CHECK_THROWS_AS(density_from_stieltjes([](Complex z) { return -1.0 / z; }, support_grid(-1, 1, 11)), Error);
}
