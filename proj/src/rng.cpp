#include "deqlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace deqlab {
namespace {

constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) noexcept {
    const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
}

}  // namespace

Philox4x64::Counter Philox4x64::block(Counter c, Key k) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        std::uint64_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, c[0], hi0, lo0);
        mulhilo(kMul1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    return c;
}

RandomStream::RandomStream(const SeedDerivation& seed, StreamPurpose purpose, std::uint32_t sub) noexcept
    : key_{seed.base_seed, (static_cast<std::uint64_t>(purpose) << 32) | sub},
      counter_{0, seed.family, seed.grid, seed.replicate} {}

void RandomStream::refill() noexcept {
    buffer_ = Philox4x64::block(counter_, key_);
    ++counter_[0];
    next_ = 0;
}

std::uint64_t RandomStream::next_u64() noexcept {
    if (next_ == 4) refill();
    return buffer_[next_++];
}

double RandomStream::uniform() noexcept {
    // (k + 0.5) / 2^53 keeps the value strictly inside (0, 1).
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double RandomStream::rademacher() noexcept {
    return (next_u64() >> 63) ? 1.0 : -1.0;
}

}  // namespace deqlab
