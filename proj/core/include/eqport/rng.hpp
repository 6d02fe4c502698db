#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace eqport {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
class Philox4x32
{
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) noexcept
    {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Standard normals addressed by (seed, stream, path, step, block); each block yields two variates.
class NormalStream
{
public:
    explicit NormalStream(std::uint64_t seed, std::uint32_t stream = 0) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream)
    {
    }

    [[nodiscard]] std::array<double, 2> pair(std::uint64_t path, std::uint32_t step, std::uint32_t block) const noexcept
    {
        const Philox4x32::Counter ctr{step, static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                                      (stream_ << 8) ^ block};
        const auto out = Philox4x32::generate(ctr, key_);
        const double u1 = to_unit((static_cast<std::uint64_t>(out[0]) << 32) | out[1]);
        const double u2 = to_unit((static_cast<std::uint64_t>(out[2]) << 32) | out[3]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    /// Fills dim normals for one path and step.
    template<class Out>
    void fill(std::uint64_t path, std::uint32_t step, int dim, Out& out) const noexcept
    {
        for (int j = 0; j < dim; j += 2) {
            const auto z = pair(path, step, static_cast<std::uint32_t>(j / 2));
            out[j] = z[0];
            if (j + 1 < dim) {
                out[j + 1] = z[1];
            }
        }
    }

private:
    static double to_unit(std::uint64_t bits) noexcept
    {
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint32_t stream_;
};

} // namespace eqport
