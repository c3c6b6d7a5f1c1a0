#pragma once

#include <cmath>
#include <cstdint>

namespace revdarts {

// Counter-based stream: a draw is a pure function of (seed, position), so a
// stream rebuilt from the same seed replays the exact byte sequence. This is
// what lets dropout masks be regenerated during reconstruction instead of
// being stored.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t position = 0)
        : seed_(seed), pos_(position) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * (pos_ + 1);
        ++pos_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_normal() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Derive an independent sub-stream seed.
    std::uint64_t fork() { return next_u64(); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t position() const { return pos_; }

private:
    std::uint64_t seed_;
    std::uint64_t pos_;
};

} // namespace revdarts
