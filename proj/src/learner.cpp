#include "votemarl/learner.hpp"

#include "votemarl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace votemarl {

namespace {

constexpr double kRebaseNats = 30.0;

double log_sum_exp(std::span<const double> values)
{
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : values)
        hi = std::max(hi, x);
    if (!std::isfinite(hi))
        return hi;
    double sum = 0.0;
    for (double x : values)
        sum += std::exp(x - hi);
    return hi + std::log(sum);
}

std::size_t sample_scaled(std::span<const double> w, double total, double u)
{
    const double target = u * total;
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        if (w[k] <= 0.0)
            continue;
        cum += w[k];
        last_positive = k;
        if (cum > target)
            return k;
    }
    return last_positive;
}

} // namespace

const char* to_string(LearnerMode mode)
{
    return mode == LearnerMode::distributed ? "distributed" : "centralized";
}

LearnerMode learner_mode_from_string(const std::string& name)
{
    if (name == "distributed")
        return LearnerMode::distributed;
    if (name == "centralized")
        return LearnerMode::centralized;
    throw ValidationError("unknown learner mode \"" + name + "\"");
}

const char* to_string(PolicyAveraging averaging)
{
    return averaging == PolicyAveraging::product ? "product" : "normalized";
}

PolicyAveraging policy_averaging_from_string(const std::string& name)
{
    if (name == "product")
        return PolicyAveraging::product;
    if (name == "normalized")
        return PolicyAveraging::normalized;
    throw ValidationError("unknown policy averaging \"" + name + "\"");
}

LearnerConfig make_config(const AmdpModel& model, std::size_t horizon, std::size_t t_mix,
                          std::optional<double> reward_bound)
{
    if (horizon == 0)
        throw ValidationError("make_config: horizon T must be at least 1");
    if (t_mix == 0)
        throw ValidationError("make_config: t_mix must be at least 1");
    const double S = static_cast<double>(model.n_states());
    const double A = static_cast<double>(model.n_actions());
    if (model.n_pairs() == 1)
        throw ValidationError("make_config: a single state-action pair leaves nothing to learn "
                              "(log(S A) = 0 makes both step sizes vanish)");
    const double bound = reward_bound.value_or(static_cast<double>(model.n_agents()));
    if (!(bound > 0.0))
        throw ValidationError("make_config: reward bound must be positive");
    if (model.max_total_reward() > bound + 1e-12) {
        std::ostringstream os;
        os << "make_config: model has summed rewards up to " << model.max_total_reward()
           << ", above the reward bound " << bound;
        throw ValidationError(os.str());
    }

    const double log_sa = std::log(S * A);
    const double T = static_cast<double>(horizon);
    const double scale = 4.0 * static_cast<double>(t_mix) + bound;

    LearnerConfig cfg;
    cfg.horizon = horizon;
    cfg.t_mix = t_mix;
    cfg.n_agents = model.n_agents();
    cfg.reward_bound = bound;
    cfg.alpha = scale * std::sqrt((S / A) * log_sa / (2.0 * T));
    cfg.beta = std::sqrt(S * A * log_sa / (2.0 * T)) / scale;
    cfg.offset = scale;
    return cfg;
}

AgentDualTable AgentDualTable::initial(std::size_t n_states, std::size_t n_actions)
{
    const double n = static_cast<double>(n_states * n_actions);
    return {std::vector<double>(n_states * n_actions, std::log(1.0 / n))};
}

CommCounts CommLedger::expected_per_iteration(std::size_t n_agents)
{
    const auto M = static_cast<std::uint64_t>(n_agents);
    return {M, 2 * M + 6};
}

void CommLedger::record(const CommCounts& counts)
{
    if (iterations > 0 && !(counts == last_iteration))
        constant_per_iteration = false;
    scalars_up += counts.up;
    scalars_down += counts.down;
    last_iteration = counts;
    ++iterations;
}

CommCounts parameter_consensus_per_iteration(std::size_t n_states, std::size_t n_actions,
                                             std::size_t n_agents)
{
    const auto table = static_cast<std::uint64_t>(n_states * n_actions);
    const auto M = static_cast<std::uint64_t>(n_agents);
    return {M * table, M * table};
}

CommLedger simulate_parameter_consensus(std::span<AgentDualTable> agents, std::size_t iterations)
{
    CommLedger ledger;
    if (agents.empty())
        return ledger;
    const std::size_t n = agents.front().log_mu.size();
    for (std::size_t it = 0; it < iterations; ++it) {
        CommCounts counts;
        std::vector<double> consensus(n, 0.0);
        for (const auto& agent : agents) {
            for (std::size_t k = 0; k < n; ++k)
                consensus[k] += agent.log_mu[k];
            counts.up += n;
        }
        for (double& x : consensus)
            x /= static_cast<double>(agents.size());
        for (auto& agent : agents) {
            agent.log_mu = consensus;
            counts.down += n;
        }
        ledger.record(counts);
    }
    return ledger;
}

Transition dual_phase_sample(RngStream& rng, const AmdpModel& model)
{
    const std::size_t k = rng.uniform_index(model.n_pairs());
    return sample_next(model, k / model.n_actions(), k % model.n_actions(), rng);
}

double global_dual_increment(const PrimalValue& v, const Transition& t, const LearnerConfig& cfg)
{
    return cfg.beta * (v.v[t.next_state] - v.v[t.state] - cfg.offset + t.total_reward());
}

double local_dual_increment(AgentId agent, const Transition& t, const PrimalValue& v,
                            double log_x, const LearnerConfig& cfg)
{
    const double M = static_cast<double>(cfg.n_agents);
    return cfg.beta * ((log_x / cfg.beta + v.v[t.next_state] - v.v[t.state] - cfg.offset) / M +
                       t.rewards.at(agent));
}

double local_dual_update(AgentDualTable& table, AgentId agent, const Transition& t,
                         const PrimalValue& v, double log_x, const LearnerConfig& cfg)
{
    const double delta = local_dual_increment(agent, t, v, log_x, cfg);
    if (!std::isfinite(delta)) {
        std::ostringstream os;
        os << "local_dual_update: non-finite increment for agent " << agent << " at ("
           << t.state << "," << t.action << ")";
        throw InvariantError(os.str());
    }
    const std::size_t n_actions = table.log_mu.size() / v.v.size();
    table.log_mu[t.state * n_actions + t.action] += delta;
    return delta;
}

GlobalDual aggregate_votes(std::span<const AgentDualTable> agents)
{
    if (agents.empty())
        throw ValidationError("aggregate_votes: no agents");
    const std::size_t n = agents.front().log_mu.size();
    std::vector<double> log_prod(n, 0.0);
    for (const auto& agent : agents) {
        if (agent.log_mu.size() != n)
            throw ValidationError("aggregate_votes: agent tables differ in shape");
        for (std::size_t k = 0; k < n; ++k)
            log_prod[k] += agent.log_mu[k];
    }
    const double lse = log_sum_exp(log_prod);
    if (!std::isfinite(lse))
        throw InvariantError("aggregate_votes: vote product vanished or overflowed");
    GlobalDual g;
    g.mu_g.resize(n);
    for (std::size_t k = 0; k < n; ++k)
        g.mu_g[k] = std::exp(log_prod[k] - lse);
    g.log_x = -lse;
    return g;
}

Transition primal_phase_sample(const GlobalDual& g, RngStream& rng, const AmdpModel& model)
{
    if (g.mu_g.size() != model.n_pairs())
        throw ValidationError("primal_phase_sample: dual has wrong size");
    double total = 0.0;
    for (double x : g.mu_g)
        total += x;
    const std::size_t k = sample_scaled(g.mu_g, total, rng.uniform());
    return sample_next(model, k / model.n_actions(), k % model.n_actions(), rng);
}

void local_primal_update(PrimalValue& v, const Transition& t, const LearnerConfig& cfg)
{
    const double radius = cfg.radius();
    v.v[t.state] = std::clamp(v.v[t.state] + cfg.alpha, -radius, radius);
    v.v[t.next_state] = std::clamp(v.v[t.next_state] - cfg.alpha, -radius, radius);
    if (t.state == t.next_state)
        v.v[t.state] = std::clamp(v.v[t.state], -radius, radius);
}

std::pair<GlobalDual, PrimalValue> centralized_step(const GlobalDual& g, const PrimalValue& v,
                                                    RngStream& rng, const AmdpModel& model,
                                                    const LearnerConfig& cfg)
{
    const Transition dual = dual_phase_sample(rng, model);
    const double delta = global_dual_increment(v, dual, cfg);
    const Transition primal = primal_phase_sample(g, rng, model);

    GlobalDual next = g;
    const std::size_t k = dual.state * model.n_actions() + dual.action;
    next.mu_g[k] *= std::exp(delta);
    double z = 0.0;
    for (double x : next.mu_g)
        z += x;
    for (double& x : next.mu_g)
        x /= z;
    next.log_x = g.log_x - std::log(z);

    PrimalValue next_v = v;
    local_primal_update(next_v, primal, cfg);
    return {std::move(next), std::move(next_v)};
}

DualWeights::DualWeights(std::vector<double> log_weights) : log_w_(std::move(log_weights))
{
    if (log_w_.empty())
        throw ValidationError("DualWeights: empty table");
    rebuild(*std::max_element(log_w_.begin(), log_w_.end()));
}

DualWeights::DualWeights(std::vector<double> log_weights, double reference)
    : log_w_(std::move(log_weights))
{
    if (log_w_.empty())
        throw ValidationError("DualWeights: empty table");
    rebuild(reference);
}

void DualWeights::rebuild(double reference)
{
    if (!std::isfinite(reference))
        throw InvariantError("DualWeights: non-finite reference exponent");
    ref_ = reference;
    w_.resize(log_w_.size());
    for (std::size_t k = 0; k < log_w_.size(); ++k)
        w_[k] = std::exp(log_w_[k] - ref_);
    retotal();
}

void DualWeights::retotal()
{
    total_ = 0.0;
    for (double x : w_)
        total_ += x;
}

void DualWeights::set_log_weight(std::size_t k, double log_w)
{
    if (!std::isfinite(log_w))
        throw InvariantError("DualWeights: non-finite log weight");
    log_w_[k] = log_w;
    if (log_w > ref_ + kRebaseNats) {
        rebuild(*std::max_element(log_w_.begin(), log_w_.end()));
        return;
    }
    w_[k] = std::exp(log_w - ref_);
    retotal();
    if (total_ < std::exp(-kRebaseNats))
        rebuild(*std::max_element(log_w_.begin(), log_w_.end()));
}

double DualWeights::log_total() const { return ref_ + std::log(total_); }

std::vector<double> DualWeights::normalized() const
{
    std::vector<double> out(w_.size());
    for (std::size_t k = 0; k < w_.size(); ++k)
        out[k] = w_[k] / total_;
    return out;
}

double DualWeights::expectation(std::span<const double> values) const
{
    double sum = 0.0;
    for (std::size_t k = 0; k < w_.size(); ++k)
        sum += w_[k] * values[k];
    return sum / total_;
}

std::size_t DualWeights::sample(double u) const { return sample_scaled(w_, total_, u); }

namespace {

std::vector<double> initial_log_weights(const AmdpModel& model)
{
    // same summation as the coordinator's vote product so both modes start bit-identical
    const double per_agent = std::log(1.0 / static_cast<double>(model.n_pairs()));
    double sum = 0.0;
    for (AgentId m = 0; m < model.n_agents(); ++m)
        sum += per_agent;
    return std::vector<double>(model.n_pairs(), sum);
}

void validate_config(const AmdpModel& model, const LearnerConfig& cfg)
{
    if (cfg.n_agents != model.n_agents())
        throw ValidationError("VotingLearner: config agent count does not match the model");
    if (!(cfg.beta > 0.0) || !(cfg.alpha > 0.0))
        throw ValidationError("VotingLearner: step sizes must be positive");
    if (cfg.t_mix == 0)
        throw ValidationError("VotingLearner: t_mix must be at least 1");
}

} // namespace

VotingLearner::VotingLearner(const AmdpModel& model, const LearnerConfig& cfg, RngStream rng,
                             LearnerMode mode)
    : model_(&model), cfg_(cfg), rng_(std::move(rng)), mode_(mode),
      weights_(initial_log_weights(model)), v_{std::vector<double>(model.n_states(), 0.0)},
      avg_acc_(model.n_pairs(), 0.0)
{
    validate_config(model, cfg);
    if (mode_ == LearnerMode::distributed) {
        agents_.assign(model.n_agents(),
                       AgentDualTable::initial(model.n_states(), model.n_actions()));
        agent_v_.assign(model.n_agents(), v_);
    }
}

const PrimalValue& VotingLearner::primal() const
{
    return mode_ == LearnerMode::distributed ? agent_v_.front() : v_;
}

GlobalDual VotingLearner::global_dual() const
{
    return {weights_.normalized(), -weights_.log_total()};
}

void VotingLearner::accumulate_average()
{
    if (cfg_.averaging == PolicyAveraging::normalized) {
        for (std::size_t k = 0; k < avg_acc_.size(); ++k)
            avg_acc_[k] += weights_.scaled(k) / weights_.scaled_total();
        return;
    }
    // prod_m mu^{m,t} = scaled * exp(reference), kept as acc * exp(shift)
    if (!avg_started_) {
        avg_shift_ = weights_.reference();
        avg_started_ = true;
    }
    if (weights_.reference() > avg_shift_ + kRebaseNats) {
        const double rescale = std::exp(avg_shift_ - weights_.reference());
        for (double& x : avg_acc_)
            x *= rescale;
        avg_shift_ = weights_.reference();
    }
    const double factor = std::exp(weights_.reference() - avg_shift_);
    if (factor == 0.0)
        return;
    for (std::size_t k = 0; k < avg_acc_.size(); ++k)
        avg_acc_[k] += weights_.scaled(k) * factor;
}

StepRecord VotingLearner::step()
{
    const std::size_t A = model_->n_actions();
    const std::size_t M = model_->n_agents();

    StepRecord rec;
    rec.t = ++t_;
    accumulate_average();
    if (!costs_.empty())
        cost_sum_ += weights_.expectation(costs_);

    // dual phase: uniform pair, every agent reweights it with its private reward
    rec.dual = dual_phase_sample(rng_, *model_);
    const std::size_t k = rec.dual.state * A + rec.dual.action;
    rec.dual_pair_weight = weights_.probability(k);
    rec.global_increment = global_dual_increment(primal(), rec.dual, cfg_);

    CommCounts counts;
    double pending = 0.0;
    if (mode_ == LearnerMode::distributed) {
        rec.log_x = cfg_.include_log_x ? -weights_.log_total() : 0.0;
        counts.down += 4 + M;
        double sum = 0.0;
        for (AgentId m = 0; m < M; ++m)
            sum += local_dual_update(agents_[m], m, rec.dual, agent_v_[m], rec.log_x, cfg_);
        rec.agent_increment_sum = sum;
        // each agent returns its updated vote for the pair
        counts.up += M;
        for (AgentId m = 0; m < M; ++m)
            pending += agents_[m].log_mu[k];
    } else {
        rec.agent_increment_sum = rec.global_increment;
        pending = weights_.log_weight(k) + rec.global_increment;
    }

    // primal phase: pair drawn from mu^{g,t}, identical update at every agent
    const std::size_t k2 = weights_.sample(rng_.uniform());
    rec.primal = sample_next(*model_, k2 / A, k2 % A, rng_);
    if (mode_ == LearnerMode::distributed) {
        counts.down += 2 + M;
        for (auto& v : agent_v_)
            local_primal_update(v, rec.primal, cfg_);
        ledger_.record(counts);
    } else {
        local_primal_update(v_, rec.primal, cfg_);
    }

    weights_.set_log_weight(k, pending);
    if (cfg_.check_invariants)
        check_step(rec);
    return rec;
}

void VotingLearner::check_step(const StepRecord& rec) const
{
    const double slack = 1e-12 * cfg_.beta * (cfg_.offset + 1.0);
    if (rec.global_increment > slack) {
        std::ostringstream os;
        os.precision(17);
        os << "sign invariant violated at t=" << rec.t << ": Delta^g = " << rec.global_increment
           << " > 0 (C = " << cfg_.offset << ")";
        throw InvariantError(os.str());
    }
    if (mode_ == LearnerMode::distributed &&
        rec.agent_increment_sum - rec.log_x > slack + 1e-12 * std::abs(rec.log_x)) {
        std::ostringstream os;
        os << "sign invariant violated at t=" << rec.t << ": agent increments sum to "
           << rec.agent_increment_sum;
        throw InvariantError(os.str());
    }
    const double radius = cfg_.radius();
    for (double x : primal().v)
        if (!(std::abs(x) <= radius)) {
            std::ostringstream os;
            os << "primal iterate left the box at t=" << rec.t;
            throw InvariantError(os.str());
        }
    double mass = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k)
        mass += weights_.probability(k);
    if (!(std::abs(mass - 1.0) <= 1e-12)) {
        std::ostringstream os;
        os.precision(17);
        os << "global dual lost normalisation at t=" << rec.t << ": mass " << mass;
        throw InvariantError(os.str());
    }
}

StochasticPolicy VotingLearner::averaged_policy() const
{
    const std::size_t S = model_->n_states();
    const std::size_t A = model_->n_actions();
    std::vector<double> probs(S * A);
    underflow_rows_ = 0;
    for (StateId i = 0; i < S; ++i) {
        double row = 0.0;
        for (ActionId a = 0; a < A; ++a)
            row += avg_acc_[i * A + a];
        if (!(row > 0.0) || !std::isfinite(row)) {
            ++underflow_rows_;
            for (ActionId a = 0; a < A; ++a)
                probs[i * A + a] = 1.0 / static_cast<double>(A);
            continue;
        }
        for (ActionId a = 0; a < A; ++a)
            probs[i * A + a] = avg_acc_[i * A + a] / row;
        // absorb rounding so the row passes the 1e-12 stochasticity check
        double sum = 0.0;
        for (ActionId a = 0; a < A; ++a)
            sum += probs[i * A + a];
        for (ActionId a = 0; a < A; ++a)
            probs[i * A + a] /= sum;
    }
    return {S, A, std::move(probs)};
}

void VotingLearner::track_costs(std::vector<double> costs)
{
    if (costs.size() != model_->n_pairs())
        throw ValidationError("track_costs: cost vector has wrong size");
    costs_ = std::move(costs);
    cost_sum_ = 0.0;
}

double VotingLearner::mean_tracked_cost() const
{
    return t_ == 0 ? 0.0 : cost_sum_ / static_cast<double>(t_);
}

nlohmann::json VotingLearner::checkpoint() const
{
    const std::size_t S = model_->n_states();
    const std::size_t A = model_->n_actions();
    auto grid = [&](const std::vector<double>& flat) {
        nlohmann::json rows = nlohmann::json::array();
        for (StateId i = 0; i < S; ++i)
            rows.push_back(std::vector<double>(flat.begin() + static_cast<long>(i * A),
                                               flat.begin() + static_cast<long>((i + 1) * A)));
        return rows;
    };
    nlohmann::json doc;
    doc["t"] = t_;
    doc["mode"] = to_string(mode_);
    doc["v"] = primal().v;
    nlohmann::json log_mu = nlohmann::json::array();
    for (const auto& agent : agents_)
        log_mu.push_back(grid(agent.log_mu));
    doc["log_mu"] = std::move(log_mu);
    if (mode_ == LearnerMode::centralized)
        doc["log_weights"] = grid(weights_.log_weights());
    doc["weights_reference"] = weights_.reference();
    doc["mu_hat_accumulator"] = grid(avg_acc_);
    doc["mu_hat_shift"] = avg_shift_;
    doc["mu_hat_started"] = avg_started_;
    doc["averaging"] = to_string(cfg_.averaging);
    doc["rng_state"] = rng_.state();
    doc["cost_sum"] = cost_sum_;
    doc["costs"] = costs_;
    doc["ledger"] = {{"scalars_up", ledger_.scalars_up},
                     {"scalars_down", ledger_.scalars_down},
                     {"iterations", ledger_.iterations},
                     {"last_up", ledger_.last_iteration.up},
                     {"last_down", ledger_.last_iteration.down},
                     {"constant_per_iteration", ledger_.constant_per_iteration}};
    return doc;
}

VotingLearner VotingLearner::resume(const AmdpModel& model, const LearnerConfig& cfg,
                                    const nlohmann::json& doc)
{
    try {
        const LearnerMode mode = learner_mode_from_string(doc.at("mode").get<std::string>());
        if (policy_averaging_from_string(doc.at("averaging").get<std::string>()) != cfg.averaging)
            throw ValidationError("checkpoint: averaging mode differs from the config");
        RngStream rng;
        rng.restore(doc.at("rng_state").get<std::string>());
        VotingLearner learner(model, cfg, rng, mode);

        const std::size_t S = model.n_states();
        const std::size_t A = model.n_actions();
        auto flat = [&](const nlohmann::json& rows) {
            std::vector<double> out;
            if (!rows.is_array() || rows.size() != S)
                throw ValidationError("checkpoint: table has wrong number of states");
            for (const auto& row : rows) {
                if (!row.is_array() || row.size() != A)
                    throw ValidationError("checkpoint: table has wrong number of actions");
                for (const auto& x : row)
                    out.push_back(x.get<double>());
            }
            return out;
        };

        learner.t_ = doc.at("t").get<std::size_t>();
        PrimalValue v{doc.at("v").get<std::vector<double>>()};
        if (v.v.size() != S)
            throw ValidationError("checkpoint: primal vector has wrong size");
        const double reference = doc.at("weights_reference").get<double>();
        if (mode == LearnerMode::distributed) {
            const auto& log_mu = doc.at("log_mu");
            if (log_mu.size() != model.n_agents())
                throw ValidationError("checkpoint: agent count differs from the model");
            for (AgentId m = 0; m < model.n_agents(); ++m)
                learner.agents_[m].log_mu = flat(log_mu[m]);
            learner.agent_v_.assign(model.n_agents(), v);
            std::vector<double> prod(model.n_pairs(), 0.0);
            for (std::size_t k = 0; k < prod.size(); ++k)
                for (AgentId m = 0; m < model.n_agents(); ++m)
                    prod[k] += learner.agents_[m].log_mu[k];
            learner.weights_ = DualWeights(std::move(prod), reference);
        } else {
            learner.v_ = v;
            learner.weights_ = DualWeights(flat(doc.at("log_weights")), reference);
        }
        learner.avg_acc_ = flat(doc.at("mu_hat_accumulator"));
        learner.avg_shift_ = doc.at("mu_hat_shift").get<double>();
        learner.avg_started_ = doc.at("mu_hat_started").get<bool>();
        learner.costs_ = doc.at("costs").get<std::vector<double>>();
        learner.cost_sum_ = doc.at("cost_sum").get<double>();
        const auto& ledger = doc.at("ledger");
        learner.ledger_.scalars_up = ledger.at("scalars_up").get<std::uint64_t>();
        learner.ledger_.scalars_down = ledger.at("scalars_down").get<std::uint64_t>();
        learner.ledger_.iterations = ledger.at("iterations").get<std::uint64_t>();
        learner.ledger_.last_iteration = {ledger.at("last_up").get<std::uint64_t>(),
                                          ledger.at("last_down").get<std::uint64_t>()};
        learner.ledger_.constant_per_iteration = ledger.at("constant_per_iteration").get<bool>();
        return learner;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: ") + e.what());
    }
}

std::vector<std::size_t> geometric_checkpoints(std::size_t horizon, double ratio)
{
    if (!(ratio > 1.0))
        throw ValidationError("geometric_checkpoints: ratio must exceed 1");
    std::vector<std::size_t> out;
    double x = 1.0;
    while (true) {
        const auto t = static_cast<std::size_t>(std::ceil(x - 1e-9));
        if (t >= horizon)
            break;
        if (out.empty() || t > out.back())
            out.push_back(t);
        x *= ratio;
    }
    if (horizon > 0)
        out.push_back(horizon);
    return out;
}

RunResult run(const AmdpModel& model, const LearnerConfig& cfg, RngStream rng, LearnerMode mode,
              const RunCallbacks& callbacks)
{
    if (cfg.horizon == 0)
        throw ValidationError("run: horizon T must be at least 1");
    VotingLearner learner(model, cfg, std::move(rng), mode);
    auto checkpoints = callbacks.checkpoints;
    std::sort(checkpoints.begin(), checkpoints.end());
    auto next = checkpoints.begin();
    for (std::size_t t = 1; t <= cfg.horizon; ++t) {
        const StepRecord rec = learner.step();
        if (callbacks.on_step)
            callbacks.on_step(rec, learner);
        while (next != checkpoints.end() && *next <= t) {
            if (*next == t && callbacks.on_checkpoint)
                callbacks.on_checkpoint({t, &learner});
            ++next;
        }
    }
    return {learner.averaged_policy(), learner.ledger(), learner.iteration()};
}

} // namespace votemarl
