#include "deqlab/ensembles.hpp"

#include <cmath>

#include "deqlab/errors.hpp"

namespace deqlab {

std::string_view to_string(Family family) {
    switch (family) {
        case Family::IidGaussian: return "random";
        case Family::GOE: return "goe";
        case Family::Orthogonal: return "orthogonal";
    }
    return "unknown";
}

Family parse_family(std::string_view name) {
    if (name == "random" || name == "iid" || name == "gaussian") return Family::IidGaussian;
    if (name == "goe") return Family::GOE;
    if (name == "orthogonal" || name == "orth") return Family::Orthogonal;
    throw InvalidArgument("unknown matrix family '" + std::string(name) + "'");
}

std::uint64_t family_tag(Family family) {
    return static_cast<std::uint64_t>(family) + 1;
}

void EnsembleSpec::validate() const {
    if (dim == 0) throw InvalidArgument("EnsembleSpec: dimension must be at least 1");
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("EnsembleSpec: scale must be finite and >= 0");
}

Matrix sample(const EnsembleSpec& spec, const SeedDerivation& seed) {
    return sample(spec, seed, StreamPurpose::Weights, 0);
}

Matrix sample(const EnsembleSpec& spec, const SeedDerivation& seed, StreamPurpose purpose, std::uint32_t sub) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(spec.dim);
    const double nd = static_cast<double>(spec.dim);
    RandomStream stream(seed, purpose, sub);
    Matrix w(n, n);

    switch (spec.family) {
        case Family::IidGaussian: {
            const double sd = std::sqrt(spec.scale / nd);
            for (Eigen::Index j = 0; j < n; ++j)
                for (Eigen::Index i = 0; i < n; ++i) w(i, j) = sd * stream.normal();
            break;
        }
        case Family::GOE: {
            const double sd = std::sqrt(spec.scale / nd);
            const double sd_diag = std::sqrt(2.0 * spec.scale / nd);
            for (Eigen::Index j = 0; j < n; ++j) {
                for (Eigen::Index i = 0; i < j; ++i) {
                    const double v = sd * stream.normal();
                    w(i, j) = v;
                    w(j, i) = v;
                }
                w(j, j) = sd_diag * stream.normal();
            }
            break;
        }
        case Family::Orthogonal: {
            Matrix g(n, n);
            for (Eigen::Index j = 0; j < n; ++j)
                for (Eigen::Index i = 0; i < n; ++i) g(i, j) = stream.normal();
            Eigen::HouseholderQR<Matrix> qr(g);
            w = qr.householderQ();
            const auto& r = qr.matrixQR();
            const double root_scale = std::sqrt(spec.scale);
            for (Eigen::Index j = 0; j < n; ++j) {
                const double sign = r(j, j) < 0.0 ? -1.0 : 1.0;
                w.col(j) *= sign * root_scale;
            }
            break;
        }
    }
    return w;
}

double empirical_gram_trace(const Matrix& w) {
    if (w.rows() != w.cols() || w.rows() == 0) throw InvalidArgument("empirical_gram_trace: expected a square matrix");
    return w.squaredNorm() / static_cast<double>(w.rows());
}

Vector sample_gaussian_vector(std::size_t n, double variance, const SeedDerivation& seed, StreamPurpose purpose,
                              std::uint32_t sub) {
    if (!(variance >= 0.0)) throw InvalidArgument("sample_gaussian_vector: variance must be >= 0");
    RandomStream stream(seed, purpose, sub);
    const double sd = std::sqrt(variance);
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = sd * stream.normal();
    return v;
}

}  // namespace deqlab
