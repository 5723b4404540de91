#include <doctest.h>

#include <cmath>

#include "deqlab/errors.hpp"
#include "deqlab/train_probe.hpp"

using namespace deqlab;

namespace {
double objective(const Matrix& w, const Vector& x, const Nonlinearity& phi, const Vector& v) {
    const auto s = deq_forward(w, x, phi, 1e-14);
    REQUIRE(s.converged);
    return v.dot(s.z);
}
}  // namespace

TEST_CASE("forward solve satisfies the fixed-point equation") {
    const std::size_t n = 30;
    const Nonlinearity phi(Activation::HardTanh);
    const Matrix w = sample({Family::IidGaussian, n, 0.6}, SeedDerivation{91, 0, 0, 0});
    const Vector x = sample_gaussian_vector(n, 1.0, SeedDerivation{92, 0, 0, 0}, StreamPurpose::Input);
    const auto s = deq_forward(w, x, phi);
    REQUIRE(s.converged);
    CHECK((s.z - phi.apply(w * s.z) - x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.h - w * s.z).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.residual < 1e-12);
}

TEST_CASE("implicit VJP matches finite differences") {
    const std::size_t n = 8;
    for (Activation a : {Activation::Tanh, Activation::HardTanh, Activation::Identity}) {
        const Nonlinearity phi(a);
        const Matrix w = sample({Family::IidGaussian, n, 0.5}, SeedDerivation{93, 0, 0, 0});
        const Vector x = sample_gaussian_vector(n, 1.0, SeedDerivation{94, 0, 0, 0}, StreamPurpose::Input);
        const Vector v = sample_gaussian_vector(n, 1.0, SeedDerivation{95, 0, 0, 0}, StreamPurpose::Readout);
        const Matrix grad = deq_vjp(w, x, phi, v);
        const double step = 1e-6;
        double worst = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                Matrix plus = w, minus = w;
                plus(i, j) += step;
                minus(i, j) -= step;
                const double fd = (objective(plus, x, phi, v) - objective(minus, x, phi, v)) / (2 * step);
                worst = std::max(worst, std::abs(fd - grad(i, j)));
            }
        CHECK(worst < 1e-6 * (1 + grad.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("forward solve reports failure beyond threshold") {
    const std::size_t n = 20;
    const Matrix w = sample({Family::Orthogonal, n, 9.0}, SeedDerivation{96, 0, 0, 0});
    const auto s = deq_forward(w, Vector::Ones(n), Nonlinearity(Activation::Identity), 1e-10, 500);
    CHECK_FALSE(s.converged);
    CHECK_THROWS_AS(deq_vjp(w, Vector::Ones(n), Nonlinearity(Activation::Identity), Vector::Ones(n)), DivergenceError);
}

TEST_CASE("probe data is deterministic") {
    ProbeTask task;
    task.dim = 10;
    const auto a = make_probe_data(task), b = make_probe_data(task);
    CHECK(a.x_train.rows() == 10);
    CHECK(a.x_train.cols() == 64);
    CHECK(a.y_validation.size() == 32);
    CHECK(a.x_train == b.x_train);
    CHECK(a.y_train == b.y_train);
    task.n_train = 0;
    CHECK_THROWS_AS(task.validate(), InvalidArgument);
}

TEST_CASE("training at small scale reduces the loss") {
    ProbeTask task;
    task.dim = 16;
    const auto data = make_probe_data(task);
    TrainOptions opt;
    opt.steps = 40;
    const auto row = train_single(task, data, Family::Orthogonal, 0.3, 0, opt, SeedDerivation{97, 0, 0, 0});
    CHECK_FALSE(row.diverged);
    CHECK(row.loss_curve.size() == 41);
    CHECK(row.final_train_loss < row.initial_loss);
    CHECK(std::isfinite(row.final_validation_loss));
}

TEST_CASE("sweep is thread-count independent") {
    ProbeTask task;
    task.dim = 12;
    const std::vector<Family> fams{Family::IidGaussian, Family::GOE};
    const std::vector<double> grid{0.3, 1.5};
    TrainOptions opt;
    opt.steps = 10;
    const auto one = train_stability_sweep(task, fams, grid, 2, opt, SeedDerivation{98, 0, 0, 0});
    opt.threads = 4;
    const auto four = train_stability_sweep(task, fams, grid, 2, opt, SeedDerivation{98, 0, 0, 0});
    REQUIRE(one.size() == 8);
    REQUIRE(four.size() == 8);
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].loss_curve == four[i].loss_curve);
        CHECK(one[i].diverged == four[i].diverged);
    }
}
