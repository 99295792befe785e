#pragma once

#include "votemarl/learner.hpp"
#include "votemarl/oracle.hpp"

#include <span>
#include <vector>

namespace votemarl {

/// Conditional moments of the dual increment at a fixed (mu_g, v), flat [i*A + a].
struct IncrementMoments {
    /// E[Delta^g_{i,a}] = beta/(SA) ((P_a v)_i - v_i + sum_m rbar_{i,a} - C)
    std::vector<double> mean;
    /// E[(Delta^g_{i,a})^2] = beta^2/(SA) sum_j p_ij(a) (v_j - v_i - C + sum_m r_ij(a))^2
    std::vector<double> second;
};

IncrementMoments increment_moments(const AmdpModel& model, std::span<const double> v,
                                   const LearnerConfig& cfg);

/// E[d] = alpha sum_a (I - P_a)^T mu_a, per state.
std::vector<double> expected_primal_direction(const AmdpModel& model, std::span<const double> mu,
                                              const LearnerConfig& cfg);

struct UnbiasednessReport {
    std::size_t n_samples = 0;
    std::vector<double> dual_mean, dual_expected, dual_se;       ///< per pair
    std::vector<double> primal_mean, primal_expected, primal_se; ///< per state
    std::size_t flagged = 0;          ///< coordinates off by more than 4 standard errors
    double max_abs_z = 0.0;           ///< largest |mean - expected| / se over coordinates with se > 0
    double max_conditional_sd = 0.0;  ///< spread of Delta^g given the sampled pair

    bool passed() const { return flagged == 0; }
};

/**
 * Monte Carlo check of the dual and primal stochastic directions at a fixed
 * (mu_g, v): n_samples independent dual-phase and primal-phase draws, means
 * and standard errors per coordinate against the closed forms. Throws
 * ValidationError when n_samples < 1000.
 */
UnbiasednessReport check_unbiasedness(const AmdpModel& model, std::span<const double> mu_g,
                                      std::span<const double> v, const LearnerConfig& cfg,
                                      std::size_t n_samples, RngStream& rng);

/// Estimated one-step conditional expectation against an analytic upper bound.
struct BoundCheck {
    std::size_t n_samples = 0;
    double mean = 0.0;
    double se = 0.0;
    double bound = 0.0;

    double margin() const { return bound + 4.0 * se - mean; }
    bool passed() const { return margin() >= 0.0; }
};

/**
 * E[KL(mu* || mu') | state] - KL(mu* || mu) by resampling the dual step,
 * against sum (mu - mu*) E[Delta] + 1/2 sum mu E[Delta^2].
 */
BoundCheck check_kl_improvement(const AmdpModel& model, std::span<const double> mu_g,
                                std::span<const double> v, std::span<const double> mu_star,
                                const LearnerConfig& cfg, std::size_t n_samples, RngStream& rng);

/// V = KL(mu* || mu) + ||v - v*||^2 / (2 S C^2)
double potential(std::span<const double> mu_g, std::span<const double> v,
                 const SolveResult& solve, const LearnerConfig& cfg);

/**
 * E[V' | state] - V by resampling a full iteration, against
 * -beta/(SA) W + 3 beta^2 C^2/(SA) with W = v_bar* + sum mu c.
 */
BoundCheck check_potential_decrease(const AmdpModel& model, std::span<const double> mu_g,
                                    std::span<const double> v, const SolveResult& solve,
                                    const LearnerConfig& cfg, std::size_t n_samples,
                                    RngStream& rng);

/**
 * Running mean of mu_g(i,a) (Delta^g_{i,a})^2 at the sampled dual pair, an
 * unbiased per-step estimate of sum mu E[Delta^2]; bound 4 beta^2 C^2/(SA).
 */
class SecondMomentMonitor {
public:
    void add(const StepRecord& rec);
    BoundCheck report(const LearnerConfig& cfg, std::size_t n_pairs) const;

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

} // namespace votemarl
