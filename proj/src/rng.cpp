#include "scfde/rng.hpp"

#include <cmath>

namespace scfde {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(std::uint32_t c[4], const std::uint32_t k[2]) noexcept {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    const std::uint32_t n0 = hi1 ^ c[1] ^ k[0];
    const std::uint32_t n1 = lo1;
    const std::uint32_t n2 = hi0 ^ c[3] ^ k[1];
    const std::uint32_t n3 = lo0;
    c[0] = n0;
    c[1] = n1;
    c[2] = n2;
    c[3] = n3;
}

}  // namespace

void Philox::block(const std::uint32_t counter[4], const std::uint32_t key[2],
                   std::uint32_t out[4]) noexcept {
    std::uint32_t c[4] = {counter[0], counter[1], counter[2], counter[3]};
    std::uint32_t k[2] = {key[0], key[1]};
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        round_once(c, k);
    }
    out[0] = c[0];
    out[1] = c[1];
    out[2] = c[2];
    out[3] = c[3];
}

Philox::Philox(std::uint64_t seed, std::uint32_t id0, std::uint32_t id1,
               std::uint32_t id2) noexcept {
    key_[0] = static_cast<std::uint32_t>(seed);
    key_[1] = static_cast<std::uint32_t>(seed >> 32);
    ctr_[0] = 0;
    ctr_[1] = id0;
    ctr_[2] = id1;
    ctr_[3] = id2;
}

void Philox::refill() noexcept {
    block(ctr_, key_, buf_);
    ++ctr_[0];  // wraps after 2^32 blocks; substream ids stay untouched
    buf_pos_ = 0;
}

std::uint32_t Philox::next_u32() noexcept {
    if (buf_pos_ == 4) refill();
    return buf_[buf_pos_++];
}

std::uint64_t Philox::next_u64() noexcept {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
}

double Philox::next_double() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Philox::next_normal() noexcept {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    const double u = next_double();
    const double v = next_double();
    const double r = std::sqrt(-2.0 * std::log1p(-u));  // 1-u in (0,1]
    const double a = 6.283185307179586476925286766559 * v;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
}

std::complex<double> Philox::next_cnormal(double variance) noexcept {
    const double u = next_double();
    const double v = next_double();
    const double r = std::sqrt(-variance * std::log1p(-u));
    const double a = 6.283185307179586476925286766559 * v;
    return {r * std::cos(a), r * std::sin(a)};
}

bool Philox::next_bit() noexcept {
    if (bits_left_ == 0) {
        bit_buf_ = next_u32();
        bits_left_ = 32;
    }
    const bool b = (bit_buf_ & 1u) != 0;
    bit_buf_ >>= 1;
    --bits_left_;
    return b;
}

}  // namespace scfde
