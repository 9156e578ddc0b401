#pragma once

#include <array>
#include <cstdint>

namespace minitest {

// splitmix64 step; also used as a seed scrambler.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** generator. Each Monte Carlo trial owns its own instance,
// derived from (master seed, trial index), so results do not depend on
// scheduling or worker count.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : state_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform double in (0, 1); safe as a log() argument.
    double next_open() {
        double u;
        do { u = next_double(); } while (u <= 0.0);
        return u;
    }

    // Unbiased integer in [0, bound).
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Counter-based sub-stream: stateless mixing of (master, trial) so that
    // trial i gets the same stream no matter which worker runs it.
    static Rng for_trial(std::uint64_t master, std::uint64_t trial) {
        std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (trial + 1));
        const std::uint64_t a = splitmix64(s);
        const std::uint64_t b = splitmix64(s);
        return Rng(a ^ b ^ master);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_{};
};

}  // namespace minitest
