#pragma once

#include "votemarl/rng.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace votemarl {

using StateId = std::size_t;
using ActionId = std::size_t;
using AgentId = std::size_t;

/// Dense row-major matrix. Used for chain transition matrices and their powers.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    const std::vector<double>& data() const { return data_; }

    Matrix operator*(const Matrix& rhs) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/**
 * Multi-agent average-reward MDP: shared transition kernel p[i][a][j] and
 * one private reward tensor r[m][i][a][j] per agent.
 *
 * Construction validates that every (i,a) row is a probability vector
 * (within 1e-12) and that every reward lies in [0,1]; ValidationError
 * otherwise. The object is immutable afterwards.
 */
class AmdpModel {
public:
    AmdpModel(std::size_t n_states, std::size_t n_actions, std::size_t n_agents,
              std::vector<double> transitions, std::vector<double> rewards);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    std::size_t n_agents() const { return n_agents_; }
    std::size_t n_pairs() const { return n_states_ * n_actions_; }

    double p(StateId i, ActionId a, StateId j) const
    {
        return transitions_[(i * n_actions_ + a) * n_states_ + j];
    }
    double r(AgentId m, StateId i, ActionId a, StateId j) const
    {
        return rewards_[((m * n_states_ + i) * n_actions_ + a) * n_states_ + j];
    }

    std::span<const double> transition_row(StateId i, ActionId a) const;

    /// Largest per-transition reward summed over agents.
    double max_total_reward() const;

    const std::vector<double>& transitions() const { return transitions_; }
    const std::vector<double>& rewards() const { return rewards_; }

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    std::size_t n_agents_;
    std::vector<double> transitions_;
    std::vector<double> rewards_;
    std::vector<double> cdf_;
    double max_total_reward_ = 0.0;

    friend StateId sample_row(const AmdpModel&, StateId, ActionId, double);
};

/// Row-stochastic state -> action distribution.
class StochasticPolicy {
public:
    StochasticPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);

    static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions);
    static StochasticPolicy deterministic(std::span<const ActionId> actions, std::size_t n_actions);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double operator()(StateId i, ActionId a) const { return probs_[i * n_actions_ + a]; }
    const std::vector<double>& probs() const { return probs_; }

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    std::vector<double> probs_;
};

/// rbar[m][i][a] = sum_j p[i][a][j] r[m][i][a][j].
class ExpectedReward {
public:
    ExpectedReward(std::size_t n_agents, std::size_t n_states, std::size_t n_actions,
                   std::vector<double> rbar);

    double operator()(AgentId m, StateId i, ActionId a) const
    {
        return rbar_[(m * n_states_ + i) * n_actions_ + a];
    }
    /// sum_m rbar[m][i][a]
    double total(StateId i, ActionId a) const { return total_[i * n_actions_ + a]; }
    const std::vector<double>& totals() const { return total_; }

    std::size_t n_agents() const { return n_agents_; }
    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }

private:
    std::size_t n_agents_;
    std::size_t n_states_;
    std::size_t n_actions_;
    std::vector<double> rbar_;
    std::vector<double> total_;
};

/// One answer from the generative model.
struct Transition {
    StateId state = 0;
    ActionId action = 0;
    StateId next_state = 0;
    std::vector<double> rewards; ///< one entry per agent

    double total_reward() const;
};

/// Next state of a row by inverse CDF at u in [0,1); zero-probability states are never returned.
StateId sample_row(const AmdpModel& model, StateId i, ActionId a, double u);

/// Generative model: draws j ~ p[i][a][.] with one uniform and reports every agent's reward.
Transition sample_next(const AmdpModel& model, StateId i, ActionId a, RngStream& rng);

ExpectedReward expected_rewards(const AmdpModel& model);

/// P^pi(i,j) = sum_a pi(i,a) p[i][a][j].
Matrix policy_transition_matrix(const AmdpModel& model, const StochasticPolicy& pi);

/// Per-state expected total reward under pi: sum_a pi(i,a) sum_m rbar[m][i][a].
std::vector<double> policy_reward(const ExpectedReward& rbar, const StochasticPolicy& pi);

} // namespace votemarl
