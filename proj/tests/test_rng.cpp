#include <doctest.h>

#include <cmath>

#include "impx/rng.hpp"

using namespace impx;

TEST_CASE("philox4x32-10 known-answer vectors") {
    // Reference vectors from the Random123 distribution.
    auto r = Philox4x32::block({0, 0, 0, 0}, {0, 0});
    CHECK(r[0] == 0x6627e8d5u);
    CHECK(r[1] == 0xe169c58du);
    CHECK(r[2] == 0xbc57ac4cu);
    CHECK(r[3] == 0x9b00dbd8u);

    r = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                          {0xffffffffu, 0xffffffffu});
    CHECK(r[0] == 0x408f276du);
    CHECK(r[1] == 0x41c83b0eu);
    CHECK(r[2] == 0xa20bc7c6u);
    CHECK(r[3] == 0x6d5451fdu);

    r = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                          {0xa4093822u, 0x299f31d0u});
    CHECK(r[0] == 0xd16cfe09u);
    CHECK(r[1] == 0x94fdccebu);
    CHECK(r[2] == 0x5001e420u);
    CHECK(r[3] == 0x24126ea1u);
}

TEST_CASE("normal draws have sane moments and are reproducible") {
    const long n = 200000;
    double sum = 0.0, sumsq = 0.0, sum3 = 0.0;
    for (long i = 0; i < n; ++i) {
        double z0, z1;
        philox_normal2(42, i, 0, 0, z0, z1);
        sum += z0 + z1;
        sumsq += z0 * z0 + z1 * z1;
        sum3 += z0 * z0 * z0 + z1 * z1 * z1;
    }
    const double mean = sum / (2 * n);
    const double var = sumsq / (2 * n) - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(2.0 * n));
    CHECK(var == doctest::Approx(1.0).epsilon(0.01));
    CHECK(std::abs(sum3 / (2 * n)) < 0.02);

    double a0, a1, b0, b1;
    philox_normal2(42, 1234, 56, 0, a0, a1);
    philox_normal2(42, 1234, 56, 0, b0, b1);
    CHECK(a0 == b0);
    CHECK(a1 == b1);
    philox_normal2(43, 1234, 56, 0, b0, b1);
    CHECK(a0 != b0);
}

TEST_CASE("distinct streams decorrelate") {
    const long n = 100000;
    double dot = 0.0;
    for (long i = 0; i < n; ++i) {
        double a0, a1, b0, b1;
        philox_normal2(7, i, 0, 0, a0, a1);
        philox_normal2(7, i + 1, 0, 0, b0, b1);
        dot += a0 * b0;
    }
    CHECK(std::abs(dot / n) < 4.0 / std::sqrt(double(n)));
}
