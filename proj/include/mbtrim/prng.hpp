#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mbtrim {

/// SplitMix64 generator. Every draw advances the state exactly once, so the
/// number of advances consumed by a routine is a documented part of its
/// contract (see randn and batches).
class Prng {
public:
    explicit Prng(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform on (0, 1]; never returns 0 so log() is always finite.
    double uniform_open0() noexcept {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform on [0, 1).
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound). One advance; multiply-shift reduction.
    std::uint64_t below(std::uint64_t bound) noexcept {
        const auto wide = static_cast<unsigned __int128>(next_u64()) * bound;
        return static_cast<std::uint64_t>(wide >> 64);
    }

    /// Standard normal via Box-Muller, cosine branch only. Two advances.
    double normal() noexcept {
        const double u1 = uniform_open0();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t state() const noexcept { return state_; }

    /// SplitMix64 output finalizer.
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Independent stream seed for (seed, stream); used to reseed per epoch and per
/// purpose without replaying earlier draws.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return Prng::mix(seed ^ Prng::mix(stream + 0x9E3779B97F4A7C15ULL));
}

}  // namespace mbtrim
