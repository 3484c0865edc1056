#ifndef IMPX_RNG_HPP
#define IMPX_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>

namespace impx {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// Stateless: each (key, counter) block yields 4 independent 32-bit words,
// so parallel path streams are just different counters.
struct Philox4x32 {
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
            std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
            std::array<std::uint32_t, 4> next{
                std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0],
                std::uint32_t(p1),
                std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1],
                std::uint32_t(p0)};
            ctr = next;
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

// Two U(0,1) variates from one Philox block (strictly inside (0,1)).
inline void philox_uniform2(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                            std::uint32_t blockIdx, double& u0, double& u1) {
    const std::array<std::uint32_t, 2> key{std::uint32_t(seed), std::uint32_t(seed >> 32)};
    const std::array<std::uint32_t, 4> ctr{std::uint32_t(path), std::uint32_t(path >> 32),
                                           step, blockIdx};
    const auto w = Philox4x32::block(ctr, key);
    const std::uint64_t v0 = (std::uint64_t(w[0]) << 32) | w[1];
    const std::uint64_t v1 = (std::uint64_t(w[2]) << 32) | w[3];
    u0 = double(v0 >> 11) * 0x1.0p-53 + 0x1.0p-54;
    u1 = double(v1 >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

// Two standard normals per Philox block via Box-Muller.
inline void philox_normal2(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                           std::uint32_t blockIdx, double& z0, double& z1) {
    double u0, u1;
    philox_uniform2(seed, path, step, blockIdx, u0, u1);
    const double rad = std::sqrt(-2.0 * std::log(u0));
    const double ang = 6.283185307179586476925286766559 * u1;
    z0 = rad * std::cos(ang);
    z1 = rad * std::sin(ang);
}

// Fills z[0..d) with standard normals for (seed, path, step).
inline void philox_normals(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                           double* z, int d) {
    for (int b = 0; 2 * b < d; ++b) {
        double z0, z1;
        philox_normal2(seed, path, step, std::uint32_t(b), z0, z1);
        z[2 * b] = z0;
        if (2 * b + 1 < d) z[2 * b + 1] = z1;
    }
}

} // namespace impx

#endif
