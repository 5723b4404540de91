#include <doctest.h>

#include <cmath>

#include "deqlab/errors.hpp"
#include "deqlab/linear_deq.hpp"
#include "deqlab/nonlinear_deq.hpp"

using namespace deqlab;

TEST_CASE("nonlinearities") {
    const Nonlinearity ht(Activation::HardTanh), id(Activation::Identity), th(Activation::Tanh);
    CHECK(ht(2.0) == 1.0);
    CHECK(ht(-0.3) == -0.3);
    CHECK(ht.derivative(0.5) == 1.0);
    CHECK(ht.derivative(1.5) == 0.0);
    CHECK(id.derivative(7.0) == 1.0);
    CHECK(th.derivative(0.3) == doctest::Approx(1 - std::tanh(0.3) * std::tanh(0.3)));
    CHECK(ht.kinks().size() == 2);
    CHECK(parse_activation("hard-tanh") == Activation::HardTanh);
    CHECK(parse_activation("linear") == Activation::Identity);
    CHECK_THROWS_AS(parse_activation("relu6"), InvalidArgument);
}

TEST_CASE("identity h-iteration reaches (I - W)^{-1} W x") {
    const std::size_t n = 50;
    const Matrix w = sample({Family::IidGaussian, n, 0.25}, SeedDerivation{81, 0, 0, 0});
    const Vector x = sample_gaussian_vector(n, 1.0, SeedDerivation{82, 0, 0, 0}, StreamPurpose::Input);
    const auto r = iterate_h(w, x, Nonlinearity(Activation::Identity), 10000, 1e-13);
    CHECK(r.converged);
    CHECK((r.solution - solve_closed_form(w, w * x)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("batched iteration matches column by column") {
    const std::size_t n = 40;
    const Matrix w = sample({Family::Orthogonal, n, 1.0}, SeedDerivation{83, 0, 0, 0});
    const Vector x = sample_gaussian_vector(n, 1.0, SeedDerivation{84, 0, 0, 0}, StreamPurpose::Input);
    const Nonlinearity phi(Activation::HardTanh);
    const std::vector<double> roots{0.3, 0.8, 1.5, 3.0};
    const auto b = iterate_h_batched(w, x, phi, roots, 300, 1e-10, true);
    for (std::size_t g = 0; g < roots.size(); ++g) {
        const auto single = iterate_h(roots[g] * w, x, phi, 300, 1e-10);
        CHECK(b.iterations[g] == single.iterations);
        CHECK(b.converged[g] == single.converged);
        if (!single.diverged) CHECK((b.h.col(g) - single.solution).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("self-consistent variance") {
    const auto s = sigma_h_selfconsistent(0.5, 1.0, 0.0, Nonlinearity(Activation::Identity));
    CHECK(s.sigma_h2 == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(s.p == doctest::Approx(1.0).epsilon(1e-12));
    const auto h = sigma_h_selfconsistent(1.0, 1.0, 0.0, Nonlinearity(Activation::HardTanh));
    CHECK(h.p == doctest::Approx(std::erf(1 / std::sqrt(2 * h.sigma_h2))).epsilon(1e-9));
    CHECK(h.sigma_h2 == doctest::Approx(1.0 * (h.sigma_phi2 + 1.0)).epsilon(1e-8));
    CHECK_THROWS_AS(sigma_h_selfconsistent(1.5, 1.0, 0.0, Nonlinearity(Activation::Identity)), ConvergenceError);
}

TEST_CASE("radius theory and critical scale") {
    const Nonlinearity id(Activation::Identity);
    CHECK(radius_theory(Family::IidGaussian, 0.25, id, 1.0) == doctest::Approx(0.5));
    CHECK(radius_theory(Family::GOE, 0.0625, id, 1.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(radius_theory(Family::GOE, 0.1, Nonlinearity(Activation::Tanh), 1.0), InvalidArgument);
    CHECK(predict_critical_V(Family::IidGaussian, id, 1.0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(predict_critical_V(Family::GOE, id, 1.0) == doctest::Approx(0.5).epsilon(1e-6));
    const double c = predict_critical_V(Family::Orthogonal, Nonlinearity(Activation::HardTanh), 1.0);
    CHECK(c > 1.0);
    const auto st = sigma_h_selfconsistent(c * c, 1.0, 0.0, Nonlinearity(Activation::HardTanh));
    CHECK(radius_theory(Family::Orthogonal, c * c, Nonlinearity(Activation::HardTanh), st.sigma_h2) ==
          doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("empirical radius on the active set") {
    const std::size_t n = 600;
    const Nonlinearity ht(Activation::HardTanh);
    const Matrix goe = sample({Family::GOE, n, 0.16}, SeedDerivation{85, 0, 0, 0});
    Vector h = Vector::Zero(n);
    for (std::size_t i = 0; i < n; i += 2) h[i] = 5.0;  // half the units saturated
    CHECK(radius_empirical(goe, h, ht) == doctest::Approx(2 * std::sqrt(0.16 * 0.5)).epsilon(0.04));
    const Matrix rnd = sample({Family::IidGaussian, n, 0.25}, SeedDerivation{86, 0, 0, 0});
    CHECK(radius_empirical(rnd, Vector::Zero(n), ht) == doctest::Approx(0.5).epsilon(0.05));
    CHECK(radius_empirical(rnd, Vector::Constant(n, 3.0), ht) == 0.0);
}

TEST_CASE("residual sweep") {
    const std::vector<Family> fams{Family::IidGaussian, Family::Orthogonal};
    const std::vector<double> grid{0.3, 3.5};
    const auto cells = residual_sweep(fams, grid, 120, 3, 60, Nonlinearity(Activation::HardTanh), SeedDerivation{87, 0, 0, 0}, 2);
    REQUIRE(cells.size() == 4);
    for (const auto& c : cells) {
        CHECK(c.n_seeds == 3);
        CHECK(c.predicted_critical > 0.3);
        if (c.sqrt_scale == 0.3) CHECK(c.residual.max < 1e-8);
        else CHECK(c.residual.median > 1e-6);
    }
}

TEST_CASE("identity NTK matches the linear kernel factor") {
    const std::size_t n = 100;
    const Vector x = Vector::Ones(n);
    const auto rec = ntk_nonlinear_empirical({Family::Orthogonal, n, 0.5}, x, x, Nonlinearity(Activation::Identity), 40,
                                             SeedDerivation{88, 0, 0, 0}, 2);
    CHECK(rec.n_diverged == 0);
    CHECK(std::abs(rec.ntk_factor - 4.0) < 5 * rec.ntk_factor_stderr + 0.2);
}
