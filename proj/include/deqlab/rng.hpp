#pragma once

#include <array>
#include <cstdint>

namespace deqlab {

/// Philox4x64-10 counter-based generator (Salmon et al., SC'11).
/// Stateless: the block for a given (key, counter) is a pure function.
class Philox4x64 {
public:
    using Counter = std::array<std::uint64_t, 4>;
    using Key = std::array<std::uint64_t, 2>;

    static Counter block(Counter counter, Key key) noexcept;
};

/// What a stream is used for. Distinct purposes never share a stream even
/// when every label coincides.
enum class StreamPurpose : std::uint32_t {
    Weights = 1,
    Input = 2,
    Readout = 3,
    UntiedStep = 4,
    Probe = 5,
    Teacher = 6,
    Mask = 7,
    SecondInput = 8,
};

/// Labels that identify one random stream inside a sweep.
///
/// Stream derivation rule: the Philox key is (base_seed, purpose << 32 | sub)
/// and the counter is (block, family, grid, replicate). Two different label
/// tuples therefore address disjoint counter ranges, so streams never overlap
/// (each stream has 2^64 blocks of 256 bits).
struct SeedDerivation {
    std::uint64_t base_seed = 0;
    std::uint64_t family = 0;
    std::uint64_t grid = 0;
    std::uint64_t replicate = 0;

    SeedDerivation with_family(std::uint64_t f) const noexcept {
        auto s = *this;
        s.family = f;
        return s;
    }
    SeedDerivation with_grid(std::uint64_t g) const noexcept {
        auto s = *this;
        s.grid = g;
        return s;
    }
    SeedDerivation with_replicate(std::uint64_t r) const noexcept {
        auto s = *this;
        s.replicate = r;
        return s;
    }

    friend bool operator==(const SeedDerivation&, const SeedDerivation&) = default;
};

class RandomStream {
public:
    RandomStream(const SeedDerivation& seed, StreamPurpose purpose, std::uint32_t sub = 0) noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() noexcept;

    /// Standard normal via Box-Muller. Platform independent, unlike
    /// std::normal_distribution.
    double normal() noexcept;

    /// +1 or -1 with equal probability.
    double rademacher() noexcept;

    bool bernoulli(double p) noexcept { return uniform() < p; }

private:
    void refill() noexcept;

    Philox4x64::Key key_;
    Philox4x64::Counter counter_;
    Philox4x64::Counter buffer_{};
    int next_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace deqlab
