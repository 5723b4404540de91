#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "deqlab/numerics.hpp"
#include "deqlab/rng.hpp"

namespace deqlab {

enum class Family { IidGaussian, GOE, Orthogonal };

inline constexpr Family kAllFamilies[] = {Family::IidGaussian, Family::GOE, Family::Orthogonal};

/// "random", "goe", "orthogonal".
std::string_view to_string(Family family);

/// Accepts the names above plus the aliases "iid", "gaussian", "orth".
Family parse_family(std::string_view name);

/// Stream label for a family; never zero so unlabeled streams stay distinct.
std::uint64_t family_tag(Family family);

/// One weight-matrix family at dimension N and scale V = tr_N[W^T W].
struct EnsembleSpec {
    Family family = Family::IidGaussian;
    std::size_t dim = 1;
    double scale = 1.0;

    /// Throws InvalidArgument for dim == 0 or a negative/non-finite scale.
    void validate() const;
};

/// Draws W at scale V from the stream (seed, Weights).
///
///   IidGaussian  entries i.i.d. N(0, V/N)
///   GOE          upper triangle N(0, V/N), diagonal N(0, 2V/N), mirrored
///   Orthogonal   sqrt(V) Q, with Q from the QR factorisation of a standard
///                Gaussian matrix and columns sign-corrected by sign(diag R)
///                so that Q is exactly Haar distributed.
Matrix sample(const EnsembleSpec& spec, const SeedDerivation& seed);

/// Same construction drawn from an explicit stream, e.g. one per untied step.
Matrix sample(const EnsembleSpec& spec, const SeedDerivation& seed, StreamPurpose purpose, std::uint32_t sub);

/// (1/N) sum_ij W_ij^2.
double empirical_gram_trace(const Matrix& w);

/// Fills a vector with i.i.d. N(0, variance) from the given stream.
Vector sample_gaussian_vector(std::size_t n, double variance, const SeedDerivation& seed, StreamPurpose purpose,
                              std::uint32_t sub = 0);

}  // namespace deqlab
