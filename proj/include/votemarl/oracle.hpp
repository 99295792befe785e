#pragma once

#include "votemarl/model.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace votemarl {

/// Exact solution of the summed-reward average-reward problem.
struct SolveResult {
    double v_bar_star = 0.0;          ///< optimal gain (sum over agents)
    std::vector<double> v_star;       ///< difference-of-value vector, mean zero
    std::vector<double> mu_star;      ///< occupation measure, flat [i*A + a]
    StochasticPolicy pi_star;
    std::size_t iterations = 0;
    double bellman_residual = 0.0;
    std::optional<std::size_t> t_mix; ///< filled by callers that estimated it
};

struct RviOptions {
    double tol = 1e-10;
    std::size_t max_iter = 1'000'000;
    /// Weight of the self-loop in the aperiodicity transform tau*I + (1-tau)*P.
    double self_loop = 0.5;
    /// Actions within this much of the greedy maximum count as tied; lowest id wins.
    double tie_tolerance = 1e-11;
};

/// Policies are enumerated only when |A|^|S| stays at or below this.
inline constexpr std::size_t kEnumerationGuard = 1'000'000;

/// |A|^|S|, saturating at kEnumerationGuard + 1.
std::size_t deterministic_policy_count(const AmdpModel& model);

/// Deterministic policy number `index` in mixed-radix order (state 0 is the fastest digit).
std::vector<ActionId> deterministic_policy(const AmdpModel& model, std::size_t index);

/// True when the uniform-policy chain is irreducible and aperiodic.
bool is_ergodic_under_uniform(const AmdpModel& model);

/**
 * Relative value iteration on the summed reward, anchored at state 0.
 *
 * Iterates the aperiodicity-transformed operator, which has the same gain
 * and bias as the original one, until the Bellman residual
 * max_i |g + h(i) - (Th)(i)| drops to `tol`. The returned v_star is
 * mean-centred, pi_star is greedy (lowest action id on ties), and
 * mu_star(i,a) = nu^{pi*}(i) pi*(i,a).
 *
 * Throws OracleError when the uniform chain is not ergodic or when max_iter
 * is reached (the message carries the last residual).
 */
SolveResult solve_rvi(const AmdpModel& model, const RviOptions& options = {});

/// Brute force over all deterministic policies; gain from the exact stationary distribution.
SolveResult enumerate_policies(const AmdpModel& model);

/// nu with nu^T P = nu^T (power iteration on the lazy chain), sum nu = 1.
std::vector<double> stationary_distribution(const Matrix& P, double tol = 1e-13,
                                            std::size_t max_iter = 10'000'000);

/// max_i || Pt(i,.) - nu ||_TV
double max_tv_distance(const Matrix& Pt, std::span<const double> nu);

/// Smallest t in [1, cap] with max_i ||P^t(i,.) - nu||_TV <= 1/4; throws OracleError past cap.
std::size_t chain_mixing_time(const Matrix& P, std::size_t cap);

enum class MixingMethod { enumerate_deterministic, dobrushin_bound, config_override };

const char* to_string(MixingMethod method);

struct MixingEstimate {
    std::size_t t_mix = 1;
    std::size_t policies_checked = 0;
    MixingMethod method = MixingMethod::enumerate_deterministic;
};

/// Max chain mixing time over every deterministic policy, times safety_factor (rounded up).
MixingEstimate estimate_mixing_time(const AmdpModel& model, std::size_t cap,
                                    double safety_factor = 1.0);

/**
 * Upper bound valid for every stationary policy. With
 * delta = max over (i,a),(k,b) of ||p[i][a] - p[k][b]||_TV, every policy
 * chain has Dobrushin coefficient <= delta, so its TV distance after t
 * steps is <= delta^t. Returns the smallest t with delta^t <= 1/4.
 */
MixingEstimate dobrushin_mixing_bound(const AmdpModel& model, std::size_t cap);

MixingEstimate mixing_override(std::size_t t_mix);

/// c(i,a) = ((I - P_a) v)_i - sum_m rbar[m][i][a], flat [i*A + a].
std::vector<double> complementarity_costs(const AmdpModel& model, const ExpectedReward& rbar,
                                          std::span<const double> v);

/**
 * v_bar* + (1/T) sum_t sum_a ((I - P_a) v* - sum_m rbar_a)^T mu_a^t.
 * Each trace entry must be a distribution over the flat (i,a) grid.
 */
double duality_gap(const AmdpModel& model, const SolveResult& solve,
                   std::span<const std::vector<double>> mu_trace);

double policy_l1_distance(const StochasticPolicy& lhs, const StochasticPolicy& rhs);

/// D_KL(p || q) with 0 log 0 = 0; +inf when q vanishes where p does not.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// max_i |v_bar + v(i) - max_a (sum_m rbar(i,a) + (P_a v)_i)|
double bellman_residual(const AmdpModel& model, const ExpectedReward& rbar, double v_bar,
                        std::span<const double> v);

/// max_j | sum_{i,a} mu(i,a) (delta_ij - p[i][a][j]) |
double dual_feasibility_residual(const AmdpModel& model, std::span<const double> mu);

/// sum_{i,a} mu(i,a) (v_bar + ((I - P_a) v)_i - sum_m rbar(i,a))
double complementarity_gap(const AmdpModel& model, const ExpectedReward& rbar, double v_bar,
                           std::span<const double> v, std::span<const double> mu);

/// min over (i,a) of v_bar + ((I - P_a) v)_i - sum_m rbar(i,a); >= 0 when primal feasible.
double min_primal_slack(const AmdpModel& model, const ExpectedReward& rbar, double v_bar,
                        std::span<const double> v);

/// {"v_bar_star", "v_star", "mu_star": [i][a], "pi_star": [i][a], "t_mix"}
nlohmann::json solve_result_to_json(const SolveResult& result);
SolveResult solve_result_from_json(const nlohmann::json& doc);

} // namespace votemarl
