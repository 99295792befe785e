#include "votemarl/rng.hpp"

#include "votemarl/errors.hpp"

#include <sstream>

namespace votemarl {

std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

RngStream RngStream::derive(std::uint64_t seed, std::uint64_t stream_id)
{
    return RngStream(mix_seed(mix_seed(seed) ^ mix_seed(stream_id + 0x632be59bd9b4e019ULL)));
}

std::uint64_t RngStream::next_u64()
{
    ++draws_;
    return engine_();
}

double RngStream::uniform()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open()
{
    double u = 0.0;
    do {
        u = uniform();
    } while (u == 0.0);
    return u;
}

std::size_t RngStream::uniform_index(std::size_t n)
{
    if (n == 0)
        throw std::invalid_argument("uniform_index: empty range");
    auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
}

std::string RngStream::state() const
{
    std::ostringstream os;
    os << seed_ << ' ' << draws_ << ' ' << engine_;
    return os.str();
}

void RngStream::restore(const std::string& state)
{
    std::istringstream is(state);
    std::uint64_t seed = 0;
    std::uint64_t draws = 0;
    std::mt19937_64 engine;
    is >> seed >> draws >> engine;
    if (!is)
        throw ValidationError("RngStream::restore: malformed state string");
    seed_ = seed;
    draws_ = draws;
    engine_ = engine;
}

} // namespace votemarl
