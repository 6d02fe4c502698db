#include "eqport/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using eqport::NormalStream;
using eqport::Philox4x32;

TEST(Philox, KnownAnswerZero)
{
    const auto out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes)
{
    const auto out = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                          {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi)
{
    const auto out = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                          {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out[0], 0xd16cfe09u);
    EXPECT_EQ(out[1], 0x94fdccebu);
    EXPECT_EQ(out[2], 0x5001e420u);
    EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(NormalStream, SameAddressSameDraw)
{
    const NormalStream a(42, 3);
    const NormalStream b(42, 3);
    for (std::uint64_t p = 0; p < 50; ++p) {
        const auto x = a.pair(p, 7, 0);
        const auto y = b.pair(p, 7, 0);
        EXPECT_EQ(x[0], y[0]);
        EXPECT_EQ(x[1], y[1]);
    }
}

TEST(NormalStream, StreamsAndSeedsDiffer)
{
    const auto base = NormalStream(1, 0).pair(0, 0, 0);
    EXPECT_NE(base[0], NormalStream(1, 1).pair(0, 0, 0)[0]);
    EXPECT_NE(base[0], NormalStream(2, 0).pair(0, 0, 0)[0]);
    EXPECT_NE(base[0], NormalStream(1, 0).pair(1, 0, 0)[0]);
    EXPECT_NE(base[0], NormalStream(1, 0).pair(0, 1, 0)[0]);
    EXPECT_NE(base[0], NormalStream(1, 0).pair(0, 0, 1)[0]);
    EXPECT_NE(base[0], NormalStream(1, 0).pair(std::uint64_t{1} << 32, 0, 0)[0]);
}

TEST(NormalStream, MomentsAreStandard)
{
    const NormalStream g(2024);
    const int n = 200000;
    double s1 = 0.0;
    double s2 = 0.0;
    double s4 = 0.0;
    double cross = 0.0;
    for (int p = 0; p < n / 2; ++p) {
        const auto z = g.pair(static_cast<std::uint64_t>(p), 0, 0);
        for (double x : z) {
            s1 += x;
            s2 += x * x;
            s4 += x * x * x * x;
        }
        cross += z[0] * z[1];
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(n));
    EXPECT_LT(std::abs(var - 1.0), 4.0 * std::sqrt(2.0 / n));
    EXPECT_LT(std::abs(s4 / n - 3.0), 4.0 * std::sqrt(96.0 / n));
    EXPECT_LT(std::abs(cross / (n / 2)), 4.0 / std::sqrt(n / 2));
}

TEST(NormalStream, FillOddDimension)
{
    const NormalStream g(5);
    double out[3] = {0.0, 0.0, 0.0};
    g.fill(9, 4, 3, out);
    const auto first = g.pair(9, 4, 0);
    const auto second = g.pair(9, 4, 1);
    EXPECT_EQ(out[0], first[0]);
    EXPECT_EQ(out[1], first[1]);
    EXPECT_EQ(out[2], second[0]);
}
