#pragma once

// Replica-indexed random streams. Stream r of a run with seed S is a pure
// function of (S, r), so replicas can be scheduled on any number of workers
// and resumed from a replica counter without replaying earlier streams.

#include <bit>
#include <cstdint>
#include <random>

namespace sandlab {

class Stream {
public:
    using result_type = std::uint64_t;

    Stream(std::uint64_t seed, std::uint64_t index) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                          0x5a4dU};
        engine_.seed(seq);
    }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    /// Uniform on {0, ..., n-1}; exact for every n >= 1 and identical across
    /// standard libraries (std::uniform_int_distribution is not).
    std::uint32_t below(std::uint32_t n) {
        if (std::has_single_bit(n)) return take_bits(std::countr_zero(n));
        // Lemire's multiply-shift with rejection.
        std::uint64_t m = static_cast<std::uint64_t>(next32()) * n;
        auto low = static_cast<std::uint32_t>(m);
        if (low < n) {
            const std::uint32_t threshold = (0u - n) % n;
            while (low < threshold) {
                m = static_cast<std::uint64_t>(next32()) * n;
                low = static_cast<std::uint32_t>(m);
            }
        }
        return static_cast<std::uint32_t>(m >> 32);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::uint32_t take_bits(int k) {
        if (k == 0) return 0;
        if (bits_left_ < k) {
            buffer_ = engine_();
            bits_left_ = 64;
        }
        auto v = static_cast<std::uint32_t>(buffer_ & ((std::uint64_t{1} << k) - 1));
        buffer_ >>= k;
        bits_left_ -= k;
        return v;
    }

    std::uint32_t next32() { return take_bits(32); }

    std::mt19937_64 engine_;
    std::uint64_t buffer_ = 0;
    int bits_left_ = 0;
};

}  // namespace sandlab
