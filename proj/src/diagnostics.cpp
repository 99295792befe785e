#include "votemarl/diagnostics.hpp"

#include "votemarl/errors.hpp"

#include <cmath>

namespace votemarl {

namespace {

struct Moments {
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double x)
    {
        sum += x;
        sum_sq += x * x;
    }
    double mean(std::size_t n) const { return sum / static_cast<double>(n); }
    double se(std::size_t n) const
    {
        const double nn = static_cast<double>(n);
        const double var = std::max(0.0, (sum_sq - sum * sum / nn) / (nn - 1.0));
        return std::sqrt(var / nn);
    }
};

/// Welford accumulator for the spread of Delta^g given the sampled pair.
struct Spread {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x)
    {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double sd() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

double squared_distance(std::span<const double> a, std::span<const double> b)
{
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        d += (a[k] - b[k]) * (a[k] - b[k]);
    return d;
}

void check_shapes(const AmdpModel& model, std::span<const double> mu, std::span<const double> v)
{
    if (mu.size() != model.n_pairs() || v.size() != model.n_states())
        throw ValidationError("diagnostics: mu or v has the wrong shape");
}

/// mu after reweighting pair k by exp(delta) and renormalising.
std::vector<double> reweighted(std::span<const double> mu, std::size_t k, double delta)
{
    std::vector<double> out(mu.begin(), mu.end());
    out[k] *= std::exp(delta);
    double z = 0.0;
    for (double x : out)
        z += x;
    for (double& x : out)
        x /= z;
    return out;
}

std::size_t sample_pair(std::span<const double> mu, double u)
{
    double total = 0.0;
    for (double x : mu)
        total += x;
    const double target = u * total;
    double cum = 0.0;
    std::size_t last = 0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        if (mu[k] <= 0.0)
            continue;
        cum += mu[k];
        last = k;
        if (cum > target)
            return k;
    }
    return last;
}

} // namespace

IncrementMoments increment_moments(const AmdpModel& model, std::span<const double> v,
                                   const LearnerConfig& cfg)
{
    const std::size_t S = model.n_states();
    const std::size_t A = model.n_actions();
    const double scale = 1.0 / static_cast<double>(S * A);
    IncrementMoments out;
    out.mean.resize(S * A);
    out.second.resize(S * A);
    for (StateId i = 0; i < S; ++i)
        for (ActionId a = 0; a < A; ++a) {
            double first = 0.0;
            double second = 0.0;
            for (StateId j = 0; j < S; ++j) {
                const double p = model.p(i, a, j);
                if (p == 0.0)
                    continue;
                double r = 0.0;
                for (AgentId m = 0; m < model.n_agents(); ++m)
                    r += model.r(m, i, a, j);
                const double x = v[j] - v[i] - cfg.offset + r;
                first += p * x;
                second += p * x * x;
            }
            out.mean[i * A + a] = cfg.beta * scale * first;
            out.second[i * A + a] = cfg.beta * cfg.beta * scale * second;
        }
    return out;
}

std::vector<double> expected_primal_direction(const AmdpModel& model, std::span<const double> mu,
                                              const LearnerConfig& cfg)
{
    const std::size_t S = model.n_states();
    const std::size_t A = model.n_actions();
    std::vector<double> d(S, 0.0);
    for (StateId i = 0; i < S; ++i)
        for (ActionId a = 0; a < A; ++a) {
            const double w = mu[i * A + a];
            d[i] += w;
            for (StateId j = 0; j < S; ++j)
                d[j] -= w * model.p(i, a, j);
        }
    for (double& x : d)
        x *= cfg.alpha;
    return d;
}

UnbiasednessReport check_unbiasedness(const AmdpModel& model, std::span<const double> mu_g,
                                      std::span<const double> v, const LearnerConfig& cfg,
                                      std::size_t n_samples, RngStream& rng)
{
    if (n_samples < 1000)
        throw ValidationError("check_unbiasedness: need at least 1000 samples");
    check_shapes(model, mu_g, v);
    const std::size_t S = model.n_states();
    const std::size_t A = model.n_actions();
    const PrimalValue pv{std::vector<double>(v.begin(), v.end())};

    std::vector<Moments> dual(S * A), primal(S);
    std::vector<Spread> given_pair(S * A);
    for (std::size_t n = 0; n < n_samples; ++n) {
        const Transition t = dual_phase_sample(rng, model);
        const std::size_t k = t.state * A + t.action;
        const double delta = global_dual_increment(pv, t, cfg);
        dual[k].add(delta);
        given_pair[k].add(delta);

        const std::size_t k2 = sample_pair(mu_g, rng.uniform());
        const Transition u = sample_next(model, k2 / A, k2 % A, rng);
        if (u.state != u.next_state) {
            primal[u.state].add(cfg.alpha);
            primal[u.next_state].add(-cfg.alpha);
        }
    }

    UnbiasednessReport report;
    report.n_samples = n_samples;
    const IncrementMoments analytic = increment_moments(model, v, cfg);
    report.dual_expected = analytic.mean;
    report.primal_expected = expected_primal_direction(model, mu_g, cfg);

    auto judge = [&](double mean, double expected, double se) {
        const double slack = 1e-12 * (std::abs(expected) + cfg.beta * cfg.offset + cfg.alpha);
        const double err = std::abs(mean - expected);
        if (se > 0.0)
            report.max_abs_z = std::max(report.max_abs_z, err / se);
        if (err > 4.0 * se + slack)
            ++report.flagged;
    };
    for (std::size_t k = 0; k < S * A; ++k) {
        report.dual_mean.push_back(dual[k].mean(n_samples));
        report.dual_se.push_back(dual[k].se(n_samples));
        judge(report.dual_mean.back(), report.dual_expected[k], report.dual_se.back());
        report.max_conditional_sd = std::max(report.max_conditional_sd, given_pair[k].sd());
    }
    for (StateId i = 0; i < S; ++i) {
        report.primal_mean.push_back(primal[i].mean(n_samples));
        report.primal_se.push_back(primal[i].se(n_samples));
        judge(report.primal_mean.back(), report.primal_expected[i], report.primal_se.back());
    }
    return report;
}

BoundCheck check_kl_improvement(const AmdpModel& model, std::span<const double> mu_g,
                                std::span<const double> v, std::span<const double> mu_star,
                                const LearnerConfig& cfg, std::size_t n_samples, RngStream& rng)
{
    if (n_samples < 2)
        throw ValidationError("check_kl_improvement: need at least 2 samples");
    check_shapes(model, mu_g, v);
    const std::size_t A = model.n_actions();
    const PrimalValue pv{std::vector<double>(v.begin(), v.end())};
    const double kl_now = kl_divergence(mu_star, mu_g);

    Moments change;
    for (std::size_t n = 0; n < n_samples; ++n) {
        const Transition t = dual_phase_sample(rng, model);
        const std::size_t k = t.state * A + t.action;
        const auto next = reweighted(mu_g, k, global_dual_increment(pv, t, cfg));
        change.add(kl_divergence(mu_star, next) - kl_now);
    }

    const IncrementMoments analytic = increment_moments(model, v, cfg);
    double bound = 0.0;
    for (std::size_t k = 0; k < mu_g.size(); ++k)
        bound += (mu_g[k] - mu_star[k]) * analytic.mean[k] + 0.5 * mu_g[k] * analytic.second[k];
    return {n_samples, change.mean(n_samples), change.se(n_samples), bound};
}

double potential(std::span<const double> mu_g, std::span<const double> v,
                 const SolveResult& solve, const LearnerConfig& cfg)
{
    const double S = static_cast<double>(v.size());
    return kl_divergence(solve.mu_star, mu_g) +
           squared_distance(v, solve.v_star) / (2.0 * S * cfg.offset * cfg.offset);
}

BoundCheck check_potential_decrease(const AmdpModel& model, std::span<const double> mu_g,
                                    std::span<const double> v, const SolveResult& solve,
                                    const LearnerConfig& cfg, std::size_t n_samples,
                                    RngStream& rng)
{
    if (n_samples < 2)
        throw ValidationError("check_potential_decrease: need at least 2 samples");
    check_shapes(model, mu_g, v);
    const std::size_t A = model.n_actions();
    const double n_pairs = static_cast<double>(model.n_pairs());
    const PrimalValue pv{std::vector<double>(v.begin(), v.end())};
    const double v_now = potential(mu_g, v, solve, cfg);

    Moments change;
    for (std::size_t n = 0; n < n_samples; ++n) {
        const Transition t = dual_phase_sample(rng, model);
        const std::size_t k = t.state * A + t.action;
        const double delta = global_dual_increment(pv, t, cfg);
        const std::size_t k2 = sample_pair(mu_g, rng.uniform());
        const Transition u = sample_next(model, k2 / A, k2 % A, rng);
        PrimalValue next_v = pv;
        local_primal_update(next_v, u, cfg);
        change.add(potential(reweighted(mu_g, k, delta), next_v.v, solve, cfg) - v_now);
    }

    const ExpectedReward rbar = expected_rewards(model);
    const auto costs = complementarity_costs(model, rbar, solve.v_star);
    double w = solve.v_bar_star;
    for (std::size_t k = 0; k < mu_g.size(); ++k)
        w += mu_g[k] * costs[k];
    const double c2 = cfg.offset * cfg.offset;
    const double bound = -cfg.beta / n_pairs * w + 3.0 * cfg.beta * cfg.beta * c2 / n_pairs;
    return {n_samples, change.mean(n_samples), change.se(n_samples), bound};
}

void SecondMomentMonitor::add(const StepRecord& rec)
{
    const double x = rec.dual_pair_weight * rec.global_increment * rec.global_increment;
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
}

BoundCheck SecondMomentMonitor::report(const LearnerConfig& cfg, std::size_t n_pairs) const
{
    BoundCheck out;
    out.n_samples = n_;
    out.mean = mean_;
    if (n_ > 1)
        out.se = std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_));
    out.bound = 4.0 * cfg.beta * cfg.beta * cfg.offset * cfg.offset / static_cast<double>(n_pairs);
    return out;
}

} // namespace votemarl
