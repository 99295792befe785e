#include "votemarl/model.hpp"

#include "votemarl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace votemarl {

namespace {

constexpr double kRowSumTolerance = 1e-12;

void check_state(const AmdpModel& model, StateId i, const char* what)
{
    if (i >= model.n_states()) {
        std::ostringstream os;
        os << what << ": state " << i << " out of range [0, " << model.n_states() << ")";
        throw std::out_of_range(os.str());
    }
}

void check_action(const AmdpModel& model, ActionId a, const char* what)
{
    if (a >= model.n_actions()) {
        std::ostringstream os;
        os << what << ": action " << a << " out of range [0, " << model.n_actions() << ")";
        throw std::out_of_range(os.str());
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix Matrix::identity(std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        m(i, i) = 1.0;
    return m;
}

Matrix Matrix::operator*(const Matrix& rhs) const
{
    if (cols_ != rhs.rows_)
        throw std::invalid_argument("Matrix product: shape mismatch");
    Matrix out(rows_, rhs.cols_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t k = 0; k < cols_; ++k) {
            const double lhs = (*this)(i, k);
            if (lhs == 0.0)
                continue;
            for (std::size_t j = 0; j < rhs.cols_; ++j)
                out(i, j) += lhs * rhs(k, j);
        }
    return out;
}

AmdpModel::AmdpModel(std::size_t n_states, std::size_t n_actions, std::size_t n_agents,
                     std::vector<double> transitions, std::vector<double> rewards)
    : n_states_(n_states), n_actions_(n_actions), n_agents_(n_agents),
      transitions_(std::move(transitions)), rewards_(std::move(rewards))
{
    if (n_states_ == 0 || n_actions_ == 0 || n_agents_ == 0)
        throw ValidationError("AmdpModel: n_states, n_actions and n_agents must be positive");
    if (transitions_.size() != n_states_ * n_actions_ * n_states_)
        throw ValidationError("AmdpModel: transition tensor has wrong size");
    if (rewards_.size() != n_agents_ * n_states_ * n_actions_ * n_states_)
        throw ValidationError("AmdpModel: reward tensor has wrong size");

    cdf_.resize(transitions_.size());
    for (StateId i = 0; i < n_states_; ++i)
        for (ActionId a = 0; a < n_actions_; ++a) {
            double sum = 0.0;
            for (StateId j = 0; j < n_states_; ++j) {
                const double pij = p(i, a, j);
                if (!(pij >= 0.0) || !std::isfinite(pij)) {
                    std::ostringstream os;
                    os << "AmdpModel: transition p[" << i << "][" << a << "][" << j
                       << "] = " << pij << " is not a probability";
                    throw ValidationError(os.str());
                }
                sum += pij;
                cdf_[(i * n_actions_ + a) * n_states_ + j] = sum;
            }
            if (std::abs(sum - 1.0) > kRowSumTolerance) {
                std::ostringstream os;
                os.precision(17);
                os << "AmdpModel: transition row (" << i << "," << a << ") sums to " << sum
                   << ", not 1";
                throw ValidationError(os.str());
            }
        }

    for (std::size_t k = 0; k < rewards_.size(); ++k) {
        const double rk = rewards_[k];
        if (!(rk >= 0.0 && rk <= 1.0)) {
            const std::size_t j = k % n_states_;
            const std::size_t a = (k / n_states_) % n_actions_;
            const std::size_t i = (k / (n_states_ * n_actions_)) % n_states_;
            const std::size_t m = k / (n_states_ * n_actions_ * n_states_);
            std::ostringstream os;
            os << "AmdpModel: reward r[" << m << "][" << i << "][" << a << "][" << j << "] = " << rk
               << " outside [0,1]";
            throw ValidationError(os.str());
        }
    }

    for (StateId i = 0; i < n_states_; ++i)
        for (ActionId a = 0; a < n_actions_; ++a)
            for (StateId j = 0; j < n_states_; ++j) {
                double total = 0.0;
                for (AgentId m = 0; m < n_agents_; ++m)
                    total += r(m, i, a, j);
                max_total_reward_ = std::max(max_total_reward_, total);
            }
}

std::span<const double> AmdpModel::transition_row(StateId i, ActionId a) const
{
    check_state(*this, i, "transition_row");
    check_action(*this, a, "transition_row");
    return {transitions_.data() + (i * n_actions_ + a) * n_states_, n_states_};
}

double AmdpModel::max_total_reward() const { return max_total_reward_; }

StochasticPolicy::StochasticPolicy(std::size_t n_states, std::size_t n_actions,
                                   std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs))
{
    if (probs_.size() != n_states_ * n_actions_)
        throw ValidationError("StochasticPolicy: probability matrix has wrong size");
    for (StateId i = 0; i < n_states_; ++i) {
        double sum = 0.0;
        for (ActionId a = 0; a < n_actions_; ++a) {
            const double pa = (*this)(i, a);
            if (!(pa >= 0.0) || !std::isfinite(pa))
                throw ValidationError("StochasticPolicy: negative or non-finite probability");
            sum += pa;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            std::ostringstream os;
            os.precision(17);
            os << "StochasticPolicy: row " << i << " sums to " << sum;
            throw ValidationError(os.str());
        }
    }
}

StochasticPolicy StochasticPolicy::uniform(std::size_t n_states, std::size_t n_actions)
{
    return {n_states, n_actions,
            std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions))};
}

StochasticPolicy StochasticPolicy::deterministic(std::span<const ActionId> actions,
                                                 std::size_t n_actions)
{
    std::vector<double> probs(actions.size() * n_actions, 0.0);
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (actions[i] >= n_actions)
            throw ValidationError("StochasticPolicy::deterministic: action out of range");
        probs[i * n_actions + actions[i]] = 1.0;
    }
    return {actions.size(), n_actions, std::move(probs)};
}

ExpectedReward::ExpectedReward(std::size_t n_agents, std::size_t n_states, std::size_t n_actions,
                               std::vector<double> rbar)
    : n_agents_(n_agents), n_states_(n_states), n_actions_(n_actions), rbar_(std::move(rbar)),
      total_(n_states * n_actions, 0.0)
{
    if (rbar_.size() != n_agents_ * n_states_ * n_actions_)
        throw ValidationError("ExpectedReward: tensor has wrong size");
    for (AgentId m = 0; m < n_agents_; ++m)
        for (std::size_t k = 0; k < n_states_ * n_actions_; ++k)
            total_[k] += rbar_[m * n_states_ * n_actions_ + k];
}

double Transition::total_reward() const
{
    double total = 0.0;
    for (double r : rewards)
        total += r;
    return total;
}

StateId sample_row(const AmdpModel& model, StateId i, ActionId a, double u)
{
    const std::size_t n = model.n_states_;
    const double* cdf = model.cdf_.data() + (i * model.n_actions_ + a) * n;
    // the last cdf entry may sit a few ulps away from 1
    const double target = u * cdf[n - 1];
    const auto* hit = std::upper_bound(cdf, cdf + n, target);
    auto j = static_cast<StateId>(hit - cdf);
    if (j >= n)
        j = n - 1;
    while (model.p(i, a, j) == 0.0 && j > 0)
        --j;
    return j;
}

Transition sample_next(const AmdpModel& model, StateId i, ActionId a, RngStream& rng)
{
    check_state(model, i, "sample_next");
    check_action(model, a, "sample_next");
    Transition t;
    t.state = i;
    t.action = a;
    t.next_state = sample_row(model, i, a, rng.uniform());
    t.rewards.resize(model.n_agents());
    for (AgentId m = 0; m < model.n_agents(); ++m)
        t.rewards[m] = model.r(m, i, a, t.next_state);
    return t;
}

ExpectedReward expected_rewards(const AmdpModel& model)
{
    const std::size_t S = model.n_states();
    const std::size_t A = model.n_actions();
    std::vector<double> rbar(model.n_agents() * S * A, 0.0);
    for (AgentId m = 0; m < model.n_agents(); ++m)
        for (StateId i = 0; i < S; ++i)
            for (ActionId a = 0; a < A; ++a) {
                double sum = 0.0;
                for (StateId j = 0; j < S; ++j)
                    sum += model.p(i, a, j) * model.r(m, i, a, j);
                rbar[(m * S + i) * A + a] = sum;
            }
    return {model.n_agents(), S, A, std::move(rbar)};
}

Matrix policy_transition_matrix(const AmdpModel& model, const StochasticPolicy& pi)
{
    if (pi.n_states() != model.n_states() || pi.n_actions() != model.n_actions())
        throw ValidationError("policy_transition_matrix: policy shape does not match model");
    const std::size_t S = model.n_states();
    Matrix P(S, S);
    for (StateId i = 0; i < S; ++i)
        for (ActionId a = 0; a < model.n_actions(); ++a) {
            const double w = pi(i, a);
            if (w == 0.0)
                continue;
            for (StateId j = 0; j < S; ++j)
                P(i, j) += w * model.p(i, a, j);
        }
    return P;
}

std::vector<double> policy_reward(const ExpectedReward& rbar, const StochasticPolicy& pi)
{
    std::vector<double> out(pi.n_states(), 0.0);
    for (StateId i = 0; i < pi.n_states(); ++i)
        for (ActionId a = 0; a < pi.n_actions(); ++a)
            out[i] += pi(i, a) * rbar.total(i, a);
    return out;
}

} // namespace votemarl
