#pragma once

#include "votemarl/model.hpp"
#include "votemarl/rng.hpp"

#include <vector>

namespace votemarl::testing {

/// Dense random model built without the instance generator: rows from
/// normalised uniforms, rewards uniform in [0, 1/M] so totals stay in [0,1].
inline AmdpModel random_model(std::size_t S, std::size_t A, std::size_t M, std::uint64_t seed)
{
    RngStream rng(seed);
    std::vector<double> p(S * A * S);
    for (std::size_t row = 0; row < S * A; ++row) {
        double sum = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
            p[row * S + j] = 0.05 + rng.uniform();
            sum += p[row * S + j];
        }
        for (std::size_t j = 0; j < S; ++j)
            p[row * S + j] /= sum;
    }
    std::vector<double> r(M * S * A * S);
    for (double& x : r)
        x = rng.uniform() / static_cast<double>(M);
    return AmdpModel(S, A, M, std::move(p), std::move(r));
}

/// Every (i,a) moves deterministically to next[i*A + a].
inline AmdpModel deterministic_model(std::size_t S, std::size_t A, std::size_t M,
                                     const std::vector<std::size_t>& next,
                                     const std::vector<double>& rewards)
{
    std::vector<double> p(S * A * S, 0.0);
    for (std::size_t k = 0; k < S * A; ++k)
        p[k * S + next[k]] = 1.0;
    return AmdpModel(S, A, M, std::move(p), rewards);
}

} // namespace votemarl::testing
