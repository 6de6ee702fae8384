#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace deco::rng {

/// Philox4x32-10 counter-based block function (Salmon et al., Random123).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key)
{
    constexpr std::uint32_t m0 = 0xD2511F53u;
    constexpr std::uint32_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += w0;
            key[1] += w1;
        }
        const std::uint64_t p0 = std::uint64_t{m0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{m1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// Stage tags for substream ids. A stream id is (stage << 40) | index, so
/// e.g. column j of the design always reads the same stream regardless of p.
enum class Stage : std::uint64_t {
    design_column = 1,
    latent = 2,
    coefficient = 3,
    noise = 4,
    partition = 5,
    cv_folds = 6,
    holdout = 7,
    loading = 8,
    dirichlet = 9,
    replication = 10,
    sampling = 11,
    holdout_latent = 12,
};

constexpr std::uint64_t stream_id(Stage stage, std::uint64_t index)
{
    return (static_cast<std::uint64_t>(stage) << 40) | (index & ((std::uint64_t{1} << 40) - 1));
}

/// Derives a child seed; used to give each replication its own data seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Sequential view of one substream: key = seed, counter = (block, stream id).
class Stream
{
public:
    Stream(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream)
    {}

    Stream(std::uint64_t seed, Stage stage, std::uint64_t index)
        : Stream(seed, stream_id(stage, index))
    {}

    std::uint32_t next_u32()
    {
        if (pos_ == 4) {
            buf_ = philox4x32({static_cast<std::uint32_t>(block_),
                               static_cast<std::uint32_t>(block_ >> 32),
                               static_cast<std::uint32_t>(stream_),
                               static_cast<std::uint32_t>(stream_ >> 32)},
                              key_);
            ++block_;
            pos_ = 0;
        }
        return buf_[pos_++];
    }

    std::uint64_t next_u64()
    {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1).
    double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    std::uint64_t below(std::uint64_t bound)
    {
        const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - bound + 1) % bound;
        for (;;) {
            const std::uint64_t x = next_u64();
            if (x >= limit) return x % bound;
        }
    }

    bool bernoulli_half() { return (next_u32() & 1u) != 0; }

    /// Standard normal via Box-Muller; the sine half is cached.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// log of a Gamma(shape, 1) variate. Marsaglia-Tsang for shape >= 1;
    /// shape < 1 uses the boost G(a) = G(a + 1) * U^(1/a), kept in log space
    /// because shapes like 1/p underflow U^(1/a) to zero.
    double log_gamma(double shape)
    {
        if (shape < 1.0) {
            const double boosted = log_gamma(shape + 1.0);
            return boosted + std::log(uniform_open()) / shape;
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = 0.0;
            double v = 0.0;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return std::log(d * v);
            }
        }
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace deco::rng
