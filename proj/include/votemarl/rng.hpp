#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace votemarl {

/**
 * Seeded random stream shared by the sampling oracle and the learners.
 *
 * Backed by std::mt19937_64, whose output sequence is fixed by the standard,
 * and converts raw words to doubles itself so draws are identical on every
 * platform. The full engine state round-trips through state()/restore().
 */
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0);

    /// Child stream whose seed is a hash of (seed, stream_id).
    static RngStream derive(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform double in (0, 1).
    double uniform_open();

    /// Uniform index in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return draws_; }

    std::string state() const;
    void restore(const std::string& state);

private:
    std::uint64_t seed_;
    std::uint64_t draws_ = 0;
    std::mt19937_64 engine_;
};

/// splitmix64 finalizer, used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x);

} // namespace votemarl
