#pragma once

#include "votemarl/model.hpp"
#include "votemarl/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

namespace votemarl {

enum class LearnerMode { distributed, centralized };
/// Running average behind the returned policy: normalised global dual or raw vote product.
enum class PolicyAveraging { product, normalized };

const char* to_string(LearnerMode mode);
LearnerMode learner_mode_from_string(const std::string& name);
const char* to_string(PolicyAveraging averaging);
PolicyAveraging policy_averaging_from_string(const std::string& name);

struct LearnerConfig {
    std::size_t horizon = 1;     ///< T
    std::size_t t_mix = 1;
    std::size_t n_agents = 1;    ///< M
    double reward_bound = 1.0;   ///< bound on the per-transition reward summed over agents
    double alpha = 0.0;          ///< primal step
    double beta = 0.0;           ///< dual step
    double offset = 0.0;         ///< C
    bool include_log_x = false;
    PolicyAveraging averaging = PolicyAveraging::normalized;
    bool check_invariants = true;

    /// Radius of the primal box, 2 t_mix.
    double radius() const { return 2.0 * static_cast<double>(t_mix); }
};

/**
 * Step sizes for horizon T:
 *   alpha = (4 t_mix + R) sqrt((S/A) log(SA) / (2T))
 *   beta  = sqrt(S A log(SA) / (2T)) / (4 t_mix + R)
 *   C     = 4 t_mix + R
 * where R bounds the summed reward of one transition. R defaults to the
 * number of agents; pass 1 for instances whose total reward is normalised.
 * Throws ValidationError when S*A = 1 (both steps vanish) or when the model
 * has a transition whose summed reward exceeds R.
 */
LearnerConfig make_config(const AmdpModel& model, std::size_t horizon, std::size_t t_mix,
                          std::optional<double> reward_bound = std::nullopt);

/// One agent's dual weights, log domain, flat [i*A + a].
struct AgentDualTable {
    std::vector<double> log_mu;

    /// log(1/(S A)) everywhere.
    static AgentDualTable initial(std::size_t n_states, std::size_t n_actions);
};

/// Difference-of-value iterate, kept inside the box ||v||_inf <= 2 t_mix.
struct PrimalValue {
    std::vector<double> v;
};

/// Normalised product of the agents' tables, mu_g = x prod_m mu^m.
struct GlobalDual {
    std::vector<double> mu_g;
    double log_x = 0.0;
};

/// Scalars exchanged between the agents and the coordinator.
struct CommCounts {
    std::uint64_t up = 0;
    std::uint64_t down = 0;

    std::uint64_t total() const { return up + down; }
    bool operator==(const CommCounts&) const = default;
};

/**
 * Audit of the simulated message traffic. Per iteration the coordinator
 * broadcasts (i, a, j, log x) and later (i', j') once each, sends every
 * agent its two private reward scalars, and receives one updated vote
 * scalar per agent: up = M, down = 2M + 6.
 */
struct CommLedger {
    std::uint64_t scalars_up = 0;
    std::uint64_t scalars_down = 0;
    std::uint64_t iterations = 0;
    CommCounts last_iteration;
    bool constant_per_iteration = true; ///< every recorded iteration had the same counts

    static CommCounts expected_per_iteration(std::size_t n_agents);
    std::uint64_t total() const { return scalars_up + scalars_down; }
    void record(const CommCounts& counts);
};

/// Per-iteration traffic of the parameter-consensus baseline: each agent uploads
/// and downloads a full S x A table.
CommCounts parameter_consensus_per_iteration(std::size_t n_states, std::size_t n_actions,
                                             std::size_t n_agents);

/// Mock that runs a round of table averaging through the same audit, for comparison.
CommLedger simulate_parameter_consensus(std::span<AgentDualTable> agents, std::size_t iterations);

/// (i,a) uniform over the grid, then the generative model.
Transition dual_phase_sample(RngStream& rng, const AmdpModel& model);

/// Delta^g = beta (v_j - v_i - C + sum_m r^m)
double global_dual_increment(const PrimalValue& v, const Transition& t, const LearnerConfig& cfg);

/// Delta^m = beta ((log x / beta + v_j - v_i - C) / M + r^m)
double local_dual_increment(AgentId agent, const Transition& t, const PrimalValue& v,
                            double log_x, const LearnerConfig& cfg);

/**
 * Multiplies agent m's weight at the sampled pair by exp(Delta^m); no other
 * entry changes. Returns Delta^m. A non-finite increment is an InvariantError.
 */
double local_dual_update(AgentDualTable& table, AgentId agent, const Transition& t,
                         const PrimalValue& v, double log_x, const LearnerConfig& cfg);

/// mu_g ∝ exp(sum_m log mu^m), normalised by log-sum-exp; log_x = -log sum prod.
GlobalDual aggregate_votes(std::span<const AgentDualTable> agents);

/// (i,a) ~ mu_g by inverse CDF, then the generative model.
Transition primal_phase_sample(const GlobalDual& g, RngStream& rng, const AmdpModel& model);

/// v <- clip(v + alpha (e_i - e_j), [-2 t_mix, 2 t_mix])
void local_primal_update(PrimalValue& v, const Transition& t, const LearnerConfig& cfg);

/**
 * One iteration of the global primal-dual update on normalised duals: dual
 * sample uniform, mu_g reweighted at that pair by exp(Delta^g) and
 * renormalised; primal sample drawn from the incoming mu_g.
 */
std::pair<GlobalDual, PrimalValue> centralized_step(const GlobalDual& g, const PrimalValue& v,
                                                    RngStream& rng, const AmdpModel& model,
                                                    const LearnerConfig& cfg);

/**
 * Log-domain weights with a cached linear copy relative to a reference
 * exponent. Sampling, normalisation and dot products cost O(n) with no
 * transcendental calls; the cache is rebuilt when weights drift 30 nats
 * away from the reference.
 */
class DualWeights {
public:
    explicit DualWeights(std::vector<double> log_weights);
    DualWeights(std::vector<double> log_weights, double reference);

    std::size_t size() const { return log_w_.size(); }
    double log_weight(std::size_t k) const { return log_w_[k]; }
    const std::vector<double>& log_weights() const { return log_w_; }
    void set_log_weight(std::size_t k, double log_w);

    /// Linear weight relative to the reference: exp(log_w[k] - reference).
    double scaled(std::size_t k) const { return w_[k]; }
    double reference() const { return ref_; }
    double scaled_total() const { return total_; }
    double log_total() const;

    double probability(std::size_t k) const { return w_[k] / total_; }
    std::vector<double> normalized() const;
    double expectation(std::span<const double> values) const;
    std::size_t sample(double u) const;

private:
    void rebuild(double reference);
    void retotal();

    std::vector<double> log_w_;
    std::vector<double> w_;
    double ref_ = 0.0;
    double total_ = 0.0;
};

/// What one iteration did, for invariant monitors and statistical checks.
struct StepRecord {
    std::size_t t = 0;              ///< iteration index, 1-based
    Transition dual;
    Transition primal;
    double global_increment = 0.0;  ///< Delta^g at the dual pair
    double agent_increment_sum = 0.0;
    double dual_pair_weight = 0.0;  ///< mu^{g,t} at the dual pair
    double log_x = 0.0;             ///< broadcast value (0 when the term is dropped)
};

/**
 * Runs the voting primal-dual iteration in either mode.
 *
 * distributed: M agent tables, each with its own copy of v; a coordinator
 * keeps the log product of the collected votes, draws both samples and
 * audits traffic. centralized: a single log-weight table updated by
 * Delta^g. Both consume the random stream identically, so with the log x
 * term dropped their trajectories coincide up to rounding.
 */
class VotingLearner {
public:
    VotingLearner(const AmdpModel& model, const LearnerConfig& cfg, RngStream rng, LearnerMode mode);

    /// Rebuilds a learner from checkpoint(); the continuation is bit-identical.
    static VotingLearner resume(const AmdpModel& model, const LearnerConfig& cfg,
                                const nlohmann::json& checkpoint);

    StepRecord step();

    std::size_t iteration() const { return t_; }
    LearnerMode mode() const { return mode_; }
    const LearnerConfig& config() const { return cfg_; }
    const AmdpModel& model() const { return *model_; }

    /// v^{t+1}; in distributed mode agent 0's copy.
    const PrimalValue& primal() const;
    /// mu^{g,t+1}, the distribution the next primal sample uses.
    GlobalDual global_dual() const;
    const DualWeights& weights() const { return weights_; }
    std::span<const AgentDualTable> agents() const { return agents_; }
    std::span<const PrimalValue> agent_primals() const { return agent_v_; }

    /// pi_hat(i,a) from the running average of the duals seen so far.
    StochasticPolicy averaged_policy() const;
    /// Rows whose averaged weight underflowed and fell back to uniform in the last call.
    std::size_t underflow_rows() const { return underflow_rows_; }

    const CommLedger& ledger() const { return ledger_; }

    /// Accumulate sum_t <mu^{g,t}, costs> from now on (e.g. complementarity costs).
    void track_costs(std::vector<double> costs);
    /// (1/t) sum_t <mu^{g,t}, costs>
    double mean_tracked_cost() const;

    RngStream& rng() { return rng_; }
    nlohmann::json checkpoint() const;

private:
    void accumulate_average();
    void check_step(const StepRecord& rec) const;

    const AmdpModel* model_;
    LearnerConfig cfg_;
    RngStream rng_;
    LearnerMode mode_;
    std::size_t t_ = 0;

    DualWeights weights_;
    std::vector<AgentDualTable> agents_;
    std::vector<PrimalValue> agent_v_;
    PrimalValue v_;

    std::vector<double> avg_acc_;
    double avg_shift_ = 0.0;
    bool avg_started_ = false;
    mutable std::size_t underflow_rows_ = 0;

    std::vector<double> costs_;
    double cost_sum_ = 0.0;

    CommLedger ledger_;
};

/// Geometric checkpoints ceil(ratio^k), deduplicated, always ending at T.
std::vector<std::size_t> geometric_checkpoints(std::size_t horizon, double ratio = 1.25);

struct RunSnapshot {
    std::size_t t = 0;
    const VotingLearner* learner = nullptr;
};

struct RunCallbacks {
    std::vector<std::size_t> checkpoints;
    std::function<void(const RunSnapshot&)> on_checkpoint;
    std::function<void(const StepRecord&, const VotingLearner&)> on_step;
};

struct RunResult {
    StochasticPolicy policy;
    CommLedger ledger;
    std::size_t iterations = 0;
};

/// T iterations; returns pi_hat from the running average.
RunResult run(const AmdpModel& model, const LearnerConfig& cfg, RngStream rng, LearnerMode mode,
              const RunCallbacks& callbacks = {});

} // namespace votemarl
