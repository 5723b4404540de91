#include <doctest.h>

#include <cmath>

#include "deqlab/analytic_moments.hpp"
#include "deqlab/errors.hpp"

using namespace deqlab;

namespace {
double slope(Family f, WeightMode m) {
    auto t = [&](double d) { return length_variance_theory(f, m, scale_from_distance(f, m, d)); };
    return (std::log(t(1e-2)) - std::log(t(1e-3))) / (std::log(1e-2) - std::log(1e-3));
}
}  // namespace

TEST_CASE("catalan numbers") {
    CHECK(catalan(0) == 1);
    CHECK(catalan(3) == 5);
    CHECK(catalan(10) == 16796);
    CHECK(catalan(36) == 11959798385860453492ULL);
    CHECK_THROWS_AS(catalan(37), InvalidArgument);
    CHECK(catalan_series(0.125) == doctest::Approx(1.17157287525381).epsilon(1e-12));
    CHECK(std::abs(catalan_series(0.125) - catalan_generating(0.125)) < 1e-12);
}

TEST_CASE("critical scales and delta conversions") {
    CHECK(critical_scale(Family::GOE, WeightMode::Tied) == 0.25);
    CHECK(critical_scale(Family::GOE, WeightMode::Untied) == 1.0);
    CHECK(critical_scale(Family::Orthogonal, WeightMode::Tied) == 1.0);
    CHECK(scale_from_distance(Family::GOE, WeightMode::Tied, 0.5) == 0.125);
    CHECK(distance_to_threshold(Family::IidGaussian, WeightMode::Tied, 0.25) == 0.75);
}

TEST_CASE("variance factor theory") {
    for (Family f : kAllFamilies)
        for (WeightMode m : {WeightMode::Tied, WeightMode::Untied}) CHECK(variance_factor_theory(f, m, 0.0) == 0.0);
    CHECK(variance_factor_theory(Family::IidGaussian, WeightMode::Tied, 0.5) == doctest::Approx(1.0));
    CHECK(variance_factor_theory(Family::GOE, WeightMode::Untied, 0.5) == doctest::Approx(1.0));
    CHECK(variance_factor_theory(Family::GOE, WeightMode::Tied, 0.125) == doctest::Approx(0.65685424949238).epsilon(1e-10));
    CHECK(goe_gram_trace_series(0.125) == doctest::Approx(1.65685424949238).epsilon(1e-12));
    CHECK(goe_variance_factor_single_pole(0.125) == doctest::Approx(-0.757359312880715).epsilon(1e-12));
    try {
        variance_factor_theory(Family::GOE, WeightMode::Tied, 0.3);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.critical_scale() == 0.25);
    }
}

TEST_CASE("length variance closed forms") {
    for (Family f : kAllFamilies)
        for (WeightMode m : {WeightMode::Tied, WeightMode::Untied}) CHECK(length_variance_theory(f, m, 0.0) == 1.0);
    CHECK(length_variance_theory(Family::Orthogonal, WeightMode::Tied, 0.5) == doctest::Approx(12.0));
    CHECK(length_variance_theory(Family::IidGaussian, WeightMode::Tied, 0.5) == doctest::Approx(16.0));
    CHECK(length_variance_theory(Family::Orthogonal, WeightMode::Untied, 0.5) == doctest::Approx(20.0 / 3.0));
    CHECK(length_variance_theory(Family::IidGaussian, WeightMode::Untied, 0.5) == doctest::Approx(64.0 / 9.0));
    CHECK(length_variance_theory(Family::GOE, WeightMode::Untied, 0.5) == doctest::Approx(64.0 / 9.0));
    CHECK(length_variance_theory(Family::GOE, WeightMode::Tied, 0.125) == doctest::Approx(5.65685424949238).epsilon(1e-12));
}

TEST_CASE("tied orthogonal T equals the series sum (i+1)^2 V^i") {
    for (double v : {0.1, 0.5, 0.9}) {
        double sum = 0, term;
        for (int i = 0; i < 100000; ++i) {
            term = (i + 1.0) * (i + 1.0) * std::pow(v, i);
            sum += term;
            if (term < 1e-16 * sum) break;
        }
        CHECK(sum == doctest::Approx(length_variance_theory(Family::Orthogonal, WeightMode::Tied, v)).epsilon(1e-10));
        CHECK(sum == doctest::Approx((1 + v) / std::pow(1 - v, 3)).epsilon(1e-10));
    }
}

TEST_CASE("recursive untied length variance") {
    for (double v : {0.1, 0.5, 0.9})
        CHECK(untied_length_variance_recursive(Family::Orthogonal, v) ==
              doctest::Approx(length_variance_theory(Family::Orthogonal, WeightMode::Untied, v)).epsilon(1e-12));
    CHECK(untied_length_variance_recursive(Family::IidGaussian, 0.5) == doctest::Approx(8.0));
    CHECK(untied_length_variance_recursive(Family::GOE, 0.5) == doctest::Approx(28.0 / 3.0));
    for (Family f : kAllFamilies) CHECK(untied_length_variance_recursive(f, 0.0) == 1.0);
    auto slope = [](Family f) {
        auto t = [&](double d) { return untied_length_variance_recursive(f, 1 - d); };
        return (std::log(t(1e-2)) - std::log(t(1e-3))) / (std::log(1e-2) - std::log(1e-3));
    };
    CHECK(slope(Family::Orthogonal) == doctest::Approx(-2).epsilon(0.025));
    CHECK(slope(Family::IidGaussian) == doctest::Approx(-3).epsilon(0.02));
    CHECK(slope(Family::GOE) == doctest::Approx(-3).epsilon(0.02));
}

TEST_CASE("divergence exponents") {
    CHECK(slope(Family::IidGaussian, WeightMode::Tied) == doctest::Approx(-4).epsilon(0.05 / 4));
    CHECK(slope(Family::Orthogonal, WeightMode::Tied) == doctest::Approx(-3).epsilon(0.05 / 3));
    CHECK(slope(Family::GOE, WeightMode::Tied) == doctest::Approx(-2.5).epsilon(0.05 / 2.5));
    for (Family f : kAllFamilies) CHECK(std::abs(slope(f, WeightMode::Untied) + 2) < 0.05);
}

TEST_CASE("ordering and monotonicity") {
    for (double d = 0.15; d < 0.9; d += 0.05) {
        const double goe = length_variance_theory(Family::GOE, WeightMode::Tied, scale_from_distance(Family::GOE, WeightMode::Tied, d));
        const double orth = length_variance_theory(Family::Orthogonal, WeightMode::Tied, 1 - d);
        const double rnd = length_variance_theory(Family::IidGaussian, WeightMode::Tied, 1 - d);
        CHECK(goe < orth);
        CHECK(orth < rnd);
    }
    for (Family f : kAllFamilies)
        for (WeightMode m : {WeightMode::Tied, WeightMode::Untied}) {
            double prev = 0;
            const double vc = critical_scale(f, m);
            for (int i = 0; i < 50; ++i) {
                const double t = length_variance_theory(f, m, vc * i / 50.0);
                CHECK(t > prev);
                prev = t;
            }
        }
}

TEST_CASE("GOE tied integral and asymptotic") {
    CHECK(goe_tied_asymptotic(0.01) == doctest::Approx(12500.0));
    CHECK(goe_tied_integral(1e-12) == doctest::Approx(1.0).epsilon(1e-9));
    for (double v : {0.01, 0.1, 0.2, 0.24})
        CHECK(goe_tied_integral(v) == doctest::Approx(std::pow(1 - 4 * v, -2.5)).epsilon(1e-9));
    const double d = 0.05, root = (1 - d) / 2;
    const double integral = goe_tied_integral(root * root);
    CHECK(integral == doctest::Approx(std::pow(1 - (1 - d) * (1 - d), -2.5)).epsilon(1e-10));
    // Leading behaviour is (sqrt2/8) delta^-2.5; the ratio tends to 1 as delta shrinks.
    CHECK(integral / (std::sqrt(2.0) / 8 * std::pow(d, -2.5)) == doctest::Approx(1.0654).epsilon(1e-3));
    const double small = 1e-4, r2 = (1 - small) / 2;
    CHECK(goe_tied_integral(r2 * r2) / (std::sqrt(2.0) / 8 * std::pow(small, -2.5)) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK_THROWS_AS(goe_tied_integral(0.25), DivergenceError);
}

TEST_CASE("finite-size caveat") {
    CHECK(finite_size_caveat(Family::GOE, WeightMode::Tied, scale_from_distance(Family::GOE, WeightMode::Tied, 0.01), 500));
    CHECK_FALSE(finite_size_caveat(Family::GOE, WeightMode::Tied, 0.125, 500));
    CHECK_FALSE(finite_size_caveat(Family::Orthogonal, WeightMode::Tied, 0.999, 10));
}

TEST_CASE("moment query dispatch and parsing") {
    CHECK(theory_value({Family::IidGaussian, WeightMode::Tied, 0.5, MomentQuantity::GramTraceFactor}) == doctest::Approx(2.0));
    CHECK(parse_moment_quantity("length_variance_T") == MomentQuantity::LengthVarianceT);
    CHECK(parse_weight_mode("untied") == WeightMode::Untied);
    CHECK_THROWS_AS(parse_weight_mode("loose"), InvalidArgument);
}
