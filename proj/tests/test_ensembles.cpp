#include <doctest.h>

#include <cmath>

#include "deqlab/ensembles.hpp"
#include "deqlab/errors.hpp"
#include "deqlab/numerics.hpp"
#include "deqlab/stats.hpp"

using namespace deqlab;

TEST_CASE("orthogonal samples satisfy W^T W = V I") {
    const Matrix w = sample({Family::Orthogonal, 50, 4.0}, SeedDerivation{1, 0, 0, 0});
    const Matrix gram = w.transpose() * w - 4.0 * Matrix::Identity(50, 50);
    CHECK(gram.cwiseAbs().maxCoeff() < 1e-12);
    const Matrix q = sample({Family::Orthogonal, 40, 0.25}, SeedDerivation{2, 0, 0, 0});
    CHECK(std::abs(empirical_gram_trace(q) - 0.25) < 1e-12);
}

TEST_CASE("GOE samples are exactly symmetric with the right variances") {
    const Matrix w = sample({Family::GOE, 100, 1.0}, SeedDerivation{3, 0, 0, 0});
    CHECK(w == w.transpose());
    const std::size_t n = 400;
    const Matrix big = sample({Family::GOE, n, 2.0}, SeedDerivation{4, 0, 0, 0});
    RunningStats off, diag;
    for (std::size_t j = 0; j < n; ++j) {
        diag.add(big(j, j) * big(j, j));
        for (std::size_t i = 0; i < j; ++i) off.add(big(i, j) * big(i, j));
    }
    CHECK(std::abs(off.mean() * n / 2.0 - 1.0) < 4 * off.std_error() * n / 2.0);
    CHECK(std::abs(diag.mean() * n / 4.0 - 1.0) < 4 * diag.std_error() * n / 4.0);
}

TEST_CASE("iid gaussian gram trace averages to V") {
    RunningStats t;
    for (std::uint64_t r = 0; r < 100; ++r)
        t.add(empirical_gram_trace(sample({Family::IidGaussian, 1000, 0.5}, SeedDerivation{5, 0, 0, r})));
    CHECK(std::abs(t.mean() - 0.5) < 3 * t.std_error());
}

TEST_CASE("empirical_gram_trace trivial cases") {
    CHECK(empirical_gram_trace(Matrix::Identity(10, 10)) == doctest::Approx(1.0));
    CHECK(empirical_gram_trace(Matrix::Zero(10, 10)) == 0.0);
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(sample({Family::GOE, 0, 1.0}, {}), InvalidArgument);
    CHECK_THROWS_AS(sample({Family::GOE, 3, -1.0}, {}), InvalidArgument);
    CHECK_THROWS_AS(parse_family("bogus"), InvalidArgument);
    CHECK(parse_family("orth") == Family::Orthogonal);
}

TEST_CASE("sampling is deterministic per label") {
    const EnsembleSpec spec{Family::Orthogonal, 30, 1.0};
    const SeedDerivation s{9, 1, 2, 3};
    CHECK(sample(spec, s) == sample(spec, s));
    CHECK(sample(spec, s) != sample(spec, s.with_replicate(4)));
}

TEST_CASE("Haar columns: unit norm and mean-zero coordinates") {
    const std::size_t n = 20, seeds = 1000;
    Vector u = Vector::Zero(n);
    u[0] = 0.6;
    u[3] = 0.8;
    std::vector<RunningStats> coords(n);
    for (std::uint64_t r = 0; r < seeds; ++r) {
        const Matrix w = sample({Family::Orthogonal, n, 2.0}, SeedDerivation{11, 0, 0, r});
        const Vector y = w * u / std::sqrt(2.0);
        REQUIRE(std::abs(y.squaredNorm() - 1.0) < 1e-10);
        for (std::size_t i = 0; i < n; ++i) coords[i].add(y[i]);
    }
    for (const auto& c : coords) CHECK(std::abs(c.mean()) < 4 * c.std_error());
}

TEST_CASE("GOE spectrum concentrates on the semicircle support") {
    const double v = 0.5;
    const auto ev = sym_spectrum(sample({Family::GOE, 2000, v}, SeedDerivation{12, 0, 0, 0}));
    const double edge = 2 * std::sqrt(v) + 0.1;
    std::size_t outside = 0;
    for (double l : ev) outside += std::abs(l) > edge;
    CHECK(static_cast<double>(outside) / ev.size() < 1e-3);
}
