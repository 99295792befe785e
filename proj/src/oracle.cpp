#include "votemarl/oracle.hpp"

#include "votemarl/errors.hpp"
#include "votemarl/model_io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace votemarl {

namespace {

std::vector<double> q_values(const AmdpModel& model, const ExpectedReward& rbar,
                             std::span<const double> h, StateId i)
{
    std::vector<double> q(model.n_actions());
    for (ActionId a = 0; a < model.n_actions(); ++a) {
        const auto row = model.transition_row(i, a);
        double ph = 0.0;
        for (StateId j = 0; j < model.n_states(); ++j)
            ph += row[j] * h[j];
        q[a] = rbar.total(i, a) + ph;
    }
    return q;
}

ActionId greedy_action(std::span<const double> q, double tie_tolerance)
{
    const double best = *std::max_element(q.begin(), q.end());
    for (ActionId a = 0; a < q.size(); ++a)
        if (q[a] >= best - tie_tolerance)
            return a;
    return 0;
}

std::vector<double> occupation_measure(const StochasticPolicy& pi, std::span<const double> nu)
{
    std::vector<double> mu(pi.n_states() * pi.n_actions());
    for (StateId i = 0; i < pi.n_states(); ++i)
        for (ActionId a = 0; a < pi.n_actions(); ++a)
            mu[i * pi.n_actions() + a] = nu[i] * pi(i, a);
    return mu;
}

void mean_center(std::vector<double>& v)
{
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (double& x : v)
        x -= mean;
}

/// Stationary distribution by a direct solve; the enumeration oracle's independent route.
std::vector<double> stationary_direct(const Matrix& P)
{
    const auto n = static_cast<Eigen::Index>(P.rows());
    Eigen::MatrixXd lhs(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            lhs(j, i) = (i == j ? 1.0 : 0.0) - P(i, j);
    // replace the last balance equation by the normalisation
    lhs.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
    if (!lu.isInvertible())
        throw OracleError("enumerate_policies: a deterministic policy induces a multichain; "
                          "the model is not ergodic");
    Eigen::VectorXd nu = lu.solve(rhs);
    return {nu.data(), nu.data() + n};
}

/// Bias h with mean(h) = 0 solving (I - P) h = r - g e for a unichain P.
std::vector<double> bias_direct(const Matrix& P, std::span<const double> r, double gain)
{
    const auto n = static_cast<Eigen::Index>(P.rows());
    Eigen::MatrixXd lhs(n, n);
    Eigen::VectorXd rhs(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            lhs(i, j) = (i == j ? 1.0 : 0.0) - P(i, j) + inv_n;
        rhs(i) = r[i] - gain;
    }
    Eigen::VectorXd h = lhs.partialPivLu().solve(rhs);
    return {h.data(), h.data() + n};
}

} // namespace

std::size_t deterministic_policy_count(const AmdpModel& model)
{
    std::size_t count = 1;
    for (StateId i = 0; i < model.n_states(); ++i) {
        if (count > kEnumerationGuard / model.n_actions())
            return kEnumerationGuard + 1;
        count *= model.n_actions();
    }
    return count;
}

std::vector<ActionId> deterministic_policy(const AmdpModel& model, std::size_t index)
{
    std::vector<ActionId> actions(model.n_states());
    for (StateId i = 0; i < model.n_states(); ++i) {
        actions[i] = index % model.n_actions();
        index /= model.n_actions();
    }
    return actions;
}

bool is_ergodic_under_uniform(const AmdpModel& model)
{
    const std::size_t S = model.n_states();
    std::vector<char> reach(S * S, 0);
    for (StateId i = 0; i < S; ++i)
        for (ActionId a = 0; a < model.n_actions(); ++a)
            for (StateId j = 0; j < S; ++j)
                if (model.p(i, a, j) > 0.0)
                    reach[i * S + j] = 1;
    // primitive iff the pattern of A^k is all-positive for k >= (S-1)^2 + 1
    const std::size_t needed = (S - 1) * (S - 1) + 1;
    std::size_t power = 1;
    while (power < needed) {
        std::vector<char> sq(S * S, 0);
        for (StateId i = 0; i < S; ++i)
            for (StateId k = 0; k < S; ++k) {
                if (!reach[i * S + k])
                    continue;
                for (StateId j = 0; j < S; ++j)
                    if (reach[k * S + j])
                        sq[i * S + j] = 1;
            }
        reach.swap(sq);
        power *= 2;
    }
    return std::all_of(reach.begin(), reach.end(), [](char c) { return c != 0; });
}

SolveResult solve_rvi(const AmdpModel& model, const RviOptions& options)
{
    if (!(options.tol > 0.0))
        throw ValidationError("solve_rvi: tolerance must be positive");
    if (!(options.self_loop >= 0.0 && options.self_loop < 1.0))
        throw ValidationError("solve_rvi: self_loop must lie in [0, 1)");
    if (!is_ergodic_under_uniform(model))
        throw OracleError("solve_rvi: the uniform-policy chain is not irreducible and aperiodic");

    const std::size_t S = model.n_states();
    const ExpectedReward rbar = expected_rewards(model);
    const double tau = options.self_loop;

    std::vector<double> h(S, 0.0);
    std::vector<double> th(S);
    double residual = std::numeric_limits<double>::infinity();
    double gain = 0.0;
    std::size_t iter = 0;
    for (; iter < options.max_iter; ++iter) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (StateId i = 0; i < S; ++i) {
            const auto q = q_values(model, rbar, h, i);
            th[i] = *std::max_element(q.begin(), q.end());
            lo = std::min(lo, th[i] - h[i]);
            hi = std::max(hi, th[i] - h[i]);
        }
        residual = 0.5 * (hi - lo);
        gain = 0.5 * (hi + lo);
        if (residual <= options.tol)
            break;
        const double anchor = tau * h[0] + (1.0 - tau) * th[0];
        for (StateId i = 0; i < S; ++i)
            h[i] = tau * h[i] + (1.0 - tau) * th[i] - anchor;
    }
    if (residual > options.tol) {
        std::ostringstream os;
        os << "solve_rvi: no convergence after " << options.max_iter
           << " iterations, last Bellman residual " << residual;
        throw OracleError(os.str());
    }

    std::vector<ActionId> actions(S);
    for (StateId i = 0; i < S; ++i)
        actions[i] = greedy_action(q_values(model, rbar, h, i), options.tie_tolerance);
    StochasticPolicy pi = StochasticPolicy::deterministic(actions, model.n_actions());
    const auto nu = stationary_distribution(policy_transition_matrix(model, pi));

    SolveResult result{gain, h, occupation_measure(pi, nu), pi, iter + 1, residual, std::nullopt};
    mean_center(result.v_star);
    return result;
}

SolveResult enumerate_policies(const AmdpModel& model)
{
    const std::size_t count = deterministic_policy_count(model);
    if (count > kEnumerationGuard) {
        std::ostringstream os;
        os << "enumerate_policies: |A|^|S| exceeds " << kEnumerationGuard
           << " deterministic policies; use solve_rvi for this model";
        throw ValidationError(os.str());
    }
    const ExpectedReward rbar = expected_rewards(model);

    double best_gain = -std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    std::vector<double> best_nu;
    for (std::size_t index = 0; index < count; ++index) {
        const auto actions = deterministic_policy(model, index);
        const auto pi = StochasticPolicy::deterministic(actions, model.n_actions());
        const auto nu = stationary_direct(policy_transition_matrix(model, pi));
        const auto r = policy_reward(rbar, pi);
        double gain = 0.0;
        for (StateId i = 0; i < model.n_states(); ++i)
            gain += nu[i] * r[i];
        // strict improvement keeps the first optimum found
        if (gain > best_gain + 1e-13) {
            best_gain = gain;
            best_index = index;
            best_nu = nu;
        }
    }

    const auto actions = deterministic_policy(model, best_index);
    StochasticPolicy pi = StochasticPolicy::deterministic(actions, model.n_actions());
    const Matrix P = policy_transition_matrix(model, pi);
    auto h = bias_direct(P, policy_reward(rbar, pi), best_gain);
    mean_center(h);
    const double residual = bellman_residual(model, rbar, best_gain, h);
    return {best_gain, h, occupation_measure(pi, best_nu), pi, count, residual, std::nullopt};
}

std::vector<double> stationary_distribution(const Matrix& P, double tol, std::size_t max_iter)
{
    const std::size_t n = P.rows();
    if (n == 0 || P.cols() != n)
        throw ValidationError("stationary_distribution: matrix must be square and non-empty");
    std::vector<double> nu(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n);
    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                next[j] += nu[i] * P(i, j);
        residual = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            residual = std::max(residual, std::abs(next[j] - nu[j]));
        if (residual <= tol)
            break;
        // lazy step (I + P)/2 has the same fixed point and never oscillates
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            nu[j] = 0.5 * (nu[j] + next[j]);
            total += nu[j];
        }
        for (double& x : nu)
            x /= total;
    }
    if (residual > tol) {
        std::ostringstream os;
        os << "stationary_distribution: no convergence, last residual " << residual;
        throw OracleError(os.str());
    }
    return nu;
}

double max_tv_distance(const Matrix& Pt, std::span<const double> nu)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < Pt.rows(); ++i) {
        double tv = 0.0;
        for (std::size_t j = 0; j < Pt.cols(); ++j)
            tv += std::abs(Pt(i, j) - nu[j]);
        worst = std::max(worst, 0.5 * tv);
    }
    return worst;
}

std::size_t chain_mixing_time(const Matrix& P, std::size_t cap)
{
    const auto nu = stationary_distribution(P);
    Matrix Pt = P;
    for (std::size_t t = 1; t <= cap; ++t) {
        if (max_tv_distance(Pt, nu) <= 0.25)
            return t;
        Pt = Pt * P;
    }
    std::ostringstream os;
    os << "mixing time exceeds the cap of " << cap << " steps";
    throw OracleError(os.str());
}

const char* to_string(MixingMethod method)
{
    switch (method) {
    case MixingMethod::enumerate_deterministic:
        return "enumerate_deterministic";
    case MixingMethod::dobrushin_bound:
        return "dobrushin_bound";
    case MixingMethod::config_override:
        return "config_override";
    }
    return "unknown";
}

MixingEstimate estimate_mixing_time(const AmdpModel& model, std::size_t cap, double safety_factor)
{
    if (!(safety_factor >= 1.0))
        throw ValidationError("estimate_mixing_time: safety factor must be >= 1");
    const std::size_t count = deterministic_policy_count(model);
    if (count > kEnumerationGuard)
        throw ValidationError("estimate_mixing_time: too many deterministic policies to "
                              "enumerate; supply a t_mix override or use the Dobrushin bound");
    std::size_t worst = 1;
    for (std::size_t index = 0; index < count; ++index) {
        const auto pi =
            StochasticPolicy::deterministic(deterministic_policy(model, index), model.n_actions());
        worst = std::max(worst, chain_mixing_time(policy_transition_matrix(model, pi), cap));
    }
    const auto scaled =
        static_cast<std::size_t>(std::ceil(static_cast<double>(worst) * safety_factor - 1e-12));
    return {std::max<std::size_t>(scaled, 1), count, MixingMethod::enumerate_deterministic};
}

MixingEstimate dobrushin_mixing_bound(const AmdpModel& model, std::size_t cap)
{
    const std::size_t S = model.n_states();
    const std::size_t rows = model.n_pairs();
    double delta = 0.0;
    for (std::size_t u = 0; u < rows; ++u)
        for (std::size_t w = u + 1; w < rows; ++w) {
            const auto pu = model.transition_row(u / model.n_actions(), u % model.n_actions());
            const auto pw = model.transition_row(w / model.n_actions(), w % model.n_actions());
            double tv = 0.0;
            for (StateId j = 0; j < S; ++j)
                tv += std::abs(pu[j] - pw[j]);
            delta = std::max(delta, 0.5 * tv);
        }
    double bound = delta;
    for (std::size_t t = 1; t <= cap; ++t) {
        if (bound <= 0.25)
            return {t, 0, MixingMethod::dobrushin_bound};
        bound *= delta;
    }
    std::ostringstream os;
    os << "dobrushin_mixing_bound: contraction coefficient " << delta
       << " gives no bound within " << cap << " steps";
    throw OracleError(os.str());
}

MixingEstimate mixing_override(std::size_t t_mix)
{
    if (t_mix == 0)
        throw ValidationError("t_mix override must be at least 1");
    return {t_mix, 0, MixingMethod::config_override};
}

std::vector<double> complementarity_costs(const AmdpModel& model, const ExpectedReward& rbar,
                                          std::span<const double> v)
{
    const std::size_t A = model.n_actions();
    std::vector<double> costs(model.n_pairs());
    for (StateId i = 0; i < model.n_states(); ++i)
        for (ActionId a = 0; a < A; ++a) {
            const auto row = model.transition_row(i, a);
            double pv = 0.0;
            for (StateId j = 0; j < model.n_states(); ++j)
                pv += row[j] * v[j];
            costs[i * A + a] = (v[i] - pv) - rbar.total(i, a);
        }
    return costs;
}

double duality_gap(const AmdpModel& model, const SolveResult& solve,
                   std::span<const std::vector<double>> mu_trace)
{
    if (mu_trace.empty())
        throw ValidationError("duality_gap: empty trace");
    const auto costs = complementarity_costs(model, expected_rewards(model), solve.v_star);
    double sum = 0.0;
    for (const auto& mu : mu_trace) {
        if (mu.size() != costs.size())
            throw ValidationError("duality_gap: trace entry has wrong size");
        double mass = 0.0;
        double term = 0.0;
        for (std::size_t k = 0; k < mu.size(); ++k) {
            if (!(mu[k] >= 0.0))
                throw ValidationError("duality_gap: negative trace entry");
            mass += mu[k];
            term += mu[k] * costs[k];
        }
        if (std::abs(mass - 1.0) > 1e-9)
            throw ValidationError("duality_gap: trace entry does not sum to 1");
        sum += term;
    }
    return solve.v_bar_star + sum / static_cast<double>(mu_trace.size());
}

double policy_l1_distance(const StochasticPolicy& lhs, const StochasticPolicy& rhs)
{
    if (lhs.n_states() != rhs.n_states() || lhs.n_actions() != rhs.n_actions())
        throw ValidationError("policy_l1_distance: policies have different shapes");
    double total = 0.0;
    for (std::size_t k = 0; k < lhs.probs().size(); ++k)
        total += std::abs(lhs.probs()[k] - rhs.probs()[k]);
    return total;
}

double kl_divergence(std::span<const double> p, std::span<const double> q)
{
    if (p.size() != q.size())
        throw ValidationError("kl_divergence: size mismatch");
    double total = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] <= 0.0)
            continue;
        if (q[k] <= 0.0)
            return std::numeric_limits<double>::infinity();
        total += p[k] * std::log(p[k] / q[k]);
    }
    return total;
}

double bellman_residual(const AmdpModel& model, const ExpectedReward& rbar, double v_bar,
                        std::span<const double> v)
{
    double worst = 0.0;
    for (StateId i = 0; i < model.n_states(); ++i) {
        const auto q = q_values(model, rbar, v, i);
        const double best = *std::max_element(q.begin(), q.end());
        worst = std::max(worst, std::abs(v_bar + v[i] - best));
    }
    return worst;
}

double dual_feasibility_residual(const AmdpModel& model, std::span<const double> mu)
{
    const std::size_t S = model.n_states();
    const std::size_t A = model.n_actions();
    std::vector<double> flow(S, 0.0);
    for (StateId i = 0; i < S; ++i)
        for (ActionId a = 0; a < A; ++a) {
            const double w = mu[i * A + a];
            flow[i] += w;
            for (StateId j = 0; j < S; ++j)
                flow[j] -= w * model.p(i, a, j);
        }
    double worst = 0.0;
    for (double f : flow)
        worst = std::max(worst, std::abs(f));
    return worst;
}

double complementarity_gap(const AmdpModel& model, const ExpectedReward& rbar, double v_bar,
                           std::span<const double> v, std::span<const double> mu)
{
    const auto costs = complementarity_costs(model, rbar, v);
    double total = 0.0;
    for (std::size_t k = 0; k < costs.size(); ++k)
        total += mu[k] * (v_bar + costs[k]);
    return total;
}

double min_primal_slack(const AmdpModel& model, const ExpectedReward& rbar, double v_bar,
                        std::span<const double> v)
{
    const auto costs = complementarity_costs(model, rbar, v);
    double worst = std::numeric_limits<double>::infinity();
    for (double c : costs)
        worst = std::min(worst, v_bar + c);
    return worst;
}

nlohmann::json solve_result_to_json(const SolveResult& result)
{
    const std::size_t S = result.pi_star.n_states();
    const std::size_t A = result.pi_star.n_actions();
    nlohmann::json mu = nlohmann::json::array();
    for (StateId i = 0; i < S; ++i)
        mu.push_back(std::vector<double>(result.mu_star.begin() + static_cast<long>(i * A),
                                         result.mu_star.begin() + static_cast<long>((i + 1) * A)));
    nlohmann::json doc = {{"v_bar_star", result.v_bar_star},
                          {"v_star", result.v_star},
                          {"mu_star", std::move(mu)},
                          {"pi_star", policy_to_json(result.pi_star)},
                          {"iterations", result.iterations},
                          {"bellman_residual", result.bellman_residual}};
    doc["t_mix"] = result.t_mix ? nlohmann::json(*result.t_mix) : nlohmann::json(nullptr);
    return doc;
}

SolveResult solve_result_from_json(const nlohmann::json& doc)
{
    try {
        StochasticPolicy pi = policy_from_json(doc.at("pi_star"));
        std::vector<double> mu;
        for (const auto& row : doc.at("mu_star"))
            for (const auto& x : row)
                mu.push_back(x.get<double>());
        SolveResult result{doc.at("v_bar_star").get<double>(),
                           doc.at("v_star").get<std::vector<double>>(),
                           std::move(mu),
                           std::move(pi),
                           doc.value("iterations", std::size_t{0}),
                           doc.value("bellman_residual", 0.0),
                           std::nullopt};
        if (doc.contains("t_mix") && !doc["t_mix"].is_null())
            result.t_mix = doc["t_mix"].get<std::size_t>();
        if (result.v_star.size() != result.pi_star.n_states() ||
            result.mu_star.size() != result.pi_star.probs().size())
            throw ValidationError("solve result: inconsistent shapes");
        return result;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("solve result: ") + e.what());
    }
}

} // namespace votemarl
