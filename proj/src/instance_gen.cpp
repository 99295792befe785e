#include "votemarl/instance_gen.hpp"

#include "votemarl/errors.hpp"
#include "votemarl/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace votemarl {

namespace {

enum Substream : std::uint64_t { transitions_stream = 1, rewards_stream = 2, split_stream = 3 };

std::vector<double> random_row(std::size_t n_states, std::size_t support, RngStream& rng)
{
    std::vector<std::size_t> ids(n_states);
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t k = 0; k < support; ++k)
        std::swap(ids[k], ids[k + rng.uniform_index(n_states - k)]);
    std::vector<double> row(n_states, 0.0);
    double sum = 0.0;
    for (std::size_t k = 0; k < support; ++k) {
        const double w = 1.0 - rng.uniform(); // (0,1], never zero
        row[ids[k]] = w;
        sum += w;
    }
    for (double& x : row)
        x /= sum;
    return row;
}

/// Totals flat [(i*A + a)*S + j] in [0,1] with the favored action dominating by `bonus`.
std::vector<double> planted_rewards(std::size_t S, std::size_t A,
                                    std::span<const ActionId> favored, double bonus,
                                    RngStream& rng)
{
    std::vector<double> total(S * A * S, 0.0);
    for (StateId i = 0; i < S; ++i) {
        double best_other = 0.0;
        for (ActionId a = 0; a < A; ++a) {
            if (a == favored[i])
                continue;
            for (StateId j = 0; j < S; ++j) {
                const double r = rng.uniform() * (1.0 - bonus);
                total[(i * A + a) * S + j] = r;
                best_other = std::max(best_other, r);
            }
        }
        const double floor = best_other + bonus;
        for (StateId j = 0; j < S; ++j)
            total[(i * A + favored[i]) * S + j] =
                std::min(1.0, floor + rng.uniform() * (1.0 - floor));
    }
    return total;
}

} // namespace

const char* to_string(RewardCap cap)
{
    return cap == RewardCap::per_pair_unit ? "per_pair_unit" : "total_unit";
}

RewardCap reward_cap_from_string(const std::string& name)
{
    if (name == "per_pair_unit")
        return RewardCap::per_pair_unit;
    if (name == "total_unit")
        return RewardCap::total_unit;
    throw ValidationError("unknown reward cap \"" + name + "\"");
}

void GenSpec::validate() const
{
    if (n_states == 0 || n_actions == 0 || n_agents == 0)
        throw ValidationError("gen spec: states, actions and agents must be positive");
    if (effective_support() > n_states)
        throw ValidationError("gen spec: support_size exceeds the number of states");
    if (!(favored_bonus > 0.0 && favored_bonus < 1.0))
        throw ValidationError("gen spec: favored_bonus must lie in (0,1) to fit rewards in [0,1]");
}

std::vector<double> simplex_weights(std::size_t n_agents, RngStream& rng)
{
    std::vector<double> w(n_agents);
    double sum = 0.0;
    for (double& x : w) {
        x = -std::log(rng.uniform_open());
        sum += x;
    }
    for (double& x : w)
        x /= sum;
    return w;
}

std::vector<double> split_rewards(std::span<const double> total, std::span<const double> weights)
{
    const std::size_t M = weights.size();
    if (M == 0)
        throw ValidationError("split_rewards: no agents");
    const std::size_t n = total.size();
    std::vector<double> out(M * n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (!(total[k] >= 0.0 && total[k] <= 1.0))
            throw ValidationError("split_rewards: total reward outside [0,1]");
        double assigned = 0.0;
        for (std::size_t m = 0; m + 1 < M; ++m) {
            const double r = weights[m] * total[k];
            out[m * n + k] = r;
            assigned += r;
        }
        out[(M - 1) * n + k] = std::max(0.0, total[k] - assigned);
    }
    return out;
}

GeneratedInstance generate(const GenSpec& spec)
{
    spec.validate();
    const std::size_t S = spec.n_states;
    const std::size_t A = spec.n_actions;
    const std::size_t M = spec.n_agents;

    RngStream trans_rng = RngStream::derive(spec.seed, transitions_stream);
    std::vector<double> transitions(S * A * S);
    for (StateId i = 0; i < S; ++i) {
        std::vector<double> shared;
        if (spec.shared_transitions)
            shared = random_row(S, spec.effective_support(), trans_rng);
        for (ActionId a = 0; a < A; ++a) {
            const auto row =
                spec.shared_transitions ? shared : random_row(S, spec.effective_support(), trans_rng);
            std::copy(row.begin(), row.end(), transitions.begin() + static_cast<long>((i * A + a) * S));
        }
    }

    RngStream reward_rng = RngStream::derive(spec.seed, rewards_stream);
    std::vector<ActionId> favored(S);
    for (auto& a : favored)
        a = reward_rng.uniform_index(A);

    std::vector<double> rewards;
    std::vector<double> weights;
    if (spec.reward_cap == RewardCap::total_unit) {
        const auto total = planted_rewards(S, A, favored, spec.favored_bonus, reward_rng);
        RngStream split_rng = RngStream::derive(spec.seed, split_stream);
        weights = simplex_weights(M, split_rng);
        rewards = split_rewards(total, weights);
    } else {
        rewards.reserve(M * S * A * S);
        for (AgentId m = 0; m < M; ++m) {
            const auto r = planted_rewards(S, A, favored, spec.favored_bonus, reward_rng);
            rewards.insert(rewards.end(), r.begin(), r.end());
        }
    }

    AmdpModel model(S, A, M, std::move(transitions), std::move(rewards));
    if (spec.reward_cap == RewardCap::total_unit && model.max_total_reward() > 1.0)
        throw InvariantError("generate: split rewards exceed the unit total cap");
    StochasticPolicy planted = StochasticPolicy::deterministic(favored, A);
    return {std::move(model), std::move(planted), std::move(favored), std::move(weights)};
}

nlohmann::json gen_spec_to_json(const GenSpec& spec)
{
    return {{"n_states", spec.n_states},
            {"n_actions", spec.n_actions},
            {"n_agents", spec.n_agents},
            {"support_size", spec.effective_support()},
            {"favored_bonus", spec.favored_bonus},
            {"reward_cap", to_string(spec.reward_cap)},
            {"seed", spec.seed},
            {"shared_transitions", spec.shared_transitions}};
}

GenSpec gen_spec_from_json(const nlohmann::json& doc)
{
    try {
        GenSpec spec;
        spec.n_states = doc.at("n_states").get<std::size_t>();
        spec.n_actions = doc.at("n_actions").get<std::size_t>();
        spec.n_agents = doc.at("n_agents").get<std::size_t>();
        spec.support_size = doc.value("support_size", std::size_t{0});
        spec.favored_bonus = doc.value("favored_bonus", 0.3);
        spec.reward_cap = reward_cap_from_string(doc.value("reward_cap", std::string("total_unit")));
        spec.seed = doc.value("seed", std::uint64_t{0});
        spec.shared_transitions = doc.value("shared_transitions", false);
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("gen spec: ") + e.what());
    }
}

nlohmann::json sidecar_json(const GenSpec& spec, const GeneratedInstance& instance)
{
    return {{"planted_policy", policy_to_json(instance.planted)},
            {"favored", instance.favored},
            {"gen_spec", gen_spec_to_json(spec)},
            {"seed", spec.seed},
            {"split_weights", instance.split_weights}};
}

} // namespace votemarl
