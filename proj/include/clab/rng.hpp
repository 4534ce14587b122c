#pragma once

// Counter-based random streams (Philox4x32-10).
//
// Every Monte-Carlo path in this library owns an independent stream addressed by
// (seed, stream_id).  Streams can be replayed from the start at any time, which is
// what makes common-random-number estimators and schedule-independent parallel
// ensembles possible: stream (s, j) produces the same numbers no matter which
// thread runs it or how many other streams were consumed in between.
//
// Layout: the 64-bit seed is the Philox key; the 128-bit counter is split into
// (block_index : u64, stream_id : u64), so each stream has 2^64 blocks of four
// 32-bit words available.

#include <array>
#include <cmath>
#include <cstdint>

namespace clab {

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::uint32_t k0, std::uint32_t k1) {
    constexpr std::uint32_t M0 = 0xD2511F53u;
    constexpr std::uint32_t M1 = 0xCD9E8D57u;
    const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

} // namespace detail

// One 4x32 block of Philox4x32-10. Exposed for the known-answer tests.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t W0 = 0x9E3779B9u;
    constexpr std::uint32_t W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
        if (r > 0) { key[0] += W0; key[1] += W1; }
        detail::philox_round(ctr, key[0], key[1]);
    }
    return ctr;
}

class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream_id)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_{static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)} {}

    // uniform on (0,1), 53-bit resolution
    double uniform() {
        const std::uint64_t u = next_u64();
        // +1 keeps the value strictly positive so log() below is always finite
        return (static_cast<double>(u >> 11) + 0.5) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; one pair per two uniforms, second value cached
    double normal() {
        if (have_cached_) { have_cached_ = false; return cached_; }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(th);
        have_cached_ = true;
        return r * std::cos(th);
    }

    void fill_normals(double* out, int n) {
        for (int i = 0; i < n; ++i) out[i] = normal();
    }

private:
    std::uint64_t next_u64() {
        if (word_ == 4) refill();
        const std::uint32_t a = block_[word_++];
        const std::uint32_t b = block_[word_++];
        return (static_cast<std::uint64_t>(a) << 32) | b;
    }

    void refill() {
        const std::array<std::uint32_t, 4> ctr = {
            static_cast<std::uint32_t>(block_index_), static_cast<std::uint32_t>(block_index_ >> 32),
            stream_[0], stream_[1]};
        block_ = philox4x32(ctr, key_);
        ++block_index_;
        word_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 2> stream_;
    std::uint64_t block_index_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int word_ = 4; // force refill on first use
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace clab
