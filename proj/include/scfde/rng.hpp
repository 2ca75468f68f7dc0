#pragma once

#include <complex>
#include <cstdint>

namespace scfde {

// Substream identifiers. Every random quantity in the project is drawn from
// a (seed, stream, id0, id1) keyed generator, so results do not depend on
// thread scheduling or evaluation order.
enum class Stream : std::uint32_t {
    kGeneric = 0,
    kChannelTaps = 1,
    kBlockData = 2,
};

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// The 64-bit seed is the cipher key; the three id words select the substream
// and occupy the high counter words. The low counter word advances as values
// are drawn, so each substream yields 2^32 blocks of four 32-bit outputs.
class Philox {
public:
    explicit Philox(std::uint64_t seed, std::uint32_t id0 = 0, std::uint32_t id1 = 0,
                    std::uint32_t id2 = 0) noexcept;
    Philox(std::uint64_t seed, Stream stream, std::uint32_t id1 = 0,
           std::uint32_t id2 = 0) noexcept
        : Philox(seed, static_cast<std::uint32_t>(stream), id1, id2) {}

    std::uint32_t next_u32() noexcept;
    std::uint64_t next_u64() noexcept;

    // Uniform on [0, 1) with 53 random bits.
    double next_double() noexcept;

    // Standard normal via Box-Muller; consumes one uniform pair per two values.
    double next_normal() noexcept;

    // Circularly-symmetric complex Gaussian with E|z|^2 = variance.
    std::complex<double> next_cnormal(double variance) noexcept;

    // Single fair bit, served from a buffered 32-bit word.
    bool next_bit() noexcept;

    // Raw 4x32 block for the given counter/key, exposed for known-answer tests.
    static void block(const std::uint32_t counter[4], const std::uint32_t key[2],
                      std::uint32_t out[4]) noexcept;

private:
    void refill() noexcept;

    std::uint32_t key_[2];
    std::uint32_t ctr_[4];
    std::uint32_t buf_[4];
    int buf_pos_ = 4;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
    std::uint32_t bit_buf_ = 0;
    int bits_left_ = 0;
};

}  // namespace scfde
