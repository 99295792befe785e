#pragma once

#include "votemarl/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace votemarl {

enum class RewardCap {
    per_pair_unit, ///< each agent's reward lies in [0,1]
    total_unit,    ///< the reward summed over agents lies in [0,1]
};

const char* to_string(RewardCap cap);
RewardCap reward_cap_from_string(const std::string& name);

struct GenSpec {
    std::size_t n_states = 50;
    std::size_t n_actions = 10;
    std::size_t n_agents = 5;
    std::size_t support_size = 0;   ///< 0 means n_states
    double favored_bonus = 0.3;
    RewardCap reward_cap = RewardCap::total_unit;
    std::uint64_t seed = 0;
    /// Every action shares state i's transition row (planted policy is then optimal).
    bool shared_transitions = false;

    std::size_t effective_support() const { return support_size == 0 ? n_states : support_size; }
    /// Throws ValidationError on an inconsistent spec.
    void validate() const;
};

struct GeneratedInstance {
    AmdpModel model;
    StochasticPolicy planted;
    std::vector<ActionId> favored;    ///< favored action per state
    std::vector<double> split_weights; ///< simplex weights (total_unit only)
};

/**
 * Random instance. Each (i,a) row puts positive mass on support_size distinct
 * next states drawn without replacement. One action per state is favored:
 * every realised total reward of that action exceeds every realised total
 * reward of the other actions in the state by at least favored_bonus, so
 * its expected total reward does too.
 *
 * Transitions, totals and the agent split use separate substreams of the
 * seed, so changing M leaves transitions and totals untouched.
 */
GeneratedInstance generate(const GenSpec& spec);

/// Simplex weights from normalised unit exponentials.
std::vector<double> simplex_weights(std::size_t n_agents, RngStream& rng);

/**
 * r^m = w_m * total for m < M-1 and the remainder for the last agent, so the
 * agents' rewards add back to total. `total` is flat [(i*A + a)*S + j]; the
 * result is flat [m][i][a][j].
 */
std::vector<double> split_rewards(std::span<const double> total, std::span<const double> weights);

/// {"planted_policy", "favored", "gen_spec", "seed", "split_weights"}
nlohmann::json sidecar_json(const GenSpec& spec, const GeneratedInstance& instance);
nlohmann::json gen_spec_to_json(const GenSpec& spec);
GenSpec gen_spec_from_json(const nlohmann::json& doc);

} // namespace votemarl
