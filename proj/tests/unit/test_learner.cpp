#include "support.hpp"

#include "votemarl/errors.hpp"
#include "votemarl/learner.hpp"
#include "votemarl/oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace votemarl;

namespace {

LearnerConfig manual_config(std::size_t M, double beta, double C, double alpha = 0.1,
                            std::size_t t_mix = 1)
{
    LearnerConfig cfg;
    cfg.n_agents = M;
    cfg.beta = beta;
    cfg.alpha = alpha;
    cfg.offset = C;
    cfg.t_mix = t_mix;
    cfg.reward_bound = static_cast<double>(M);
    return cfg;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        d = std::max(d, std::abs(a[k] - b[k]));
    return d;
}

} // namespace

TEST_CASE("step sizes follow the closed forms")
{
    const auto m = testing::random_model(50, 10, 5, 1);
    const double L = std::log(500.0);
    const auto T = static_cast<std::size_t>(2.0 * 50 * 10 * L);
    const auto cfg = make_config(m, T, 1);
    const double Td = static_cast<double>(T);
    CHECK(cfg.offset == 9.0);
    CHECK(std::abs(cfg.beta - (1.0 / 9.0) * std::sqrt(500.0 * L / (2.0 * Td))) <= 1e-15 * cfg.beta);
    CHECK(std::abs(cfg.alpha - 9.0 * std::sqrt((50.0 / 10.0) * L / (2.0 * Td))) <= 1e-15 * cfg.alpha);
    CHECK(cfg.alpha == doctest::Approx(cfg.offset * cfg.offset * cfg.beta / 10.0).epsilon(1e-14));

    const auto cfg2 = make_config(m, 2 * T, 1);
    CHECK(cfg2.alpha / cfg.alpha == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(cfg2.beta / cfg.beta == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));

    const auto m3 = testing::random_model(3, 2, 3, 2);
    CHECK(make_config(m3, 100, 2).offset == 11.0);
    CHECK(make_config(m3, 100, 2, 1.0).offset == 9.0);
}

TEST_CASE("make_config rejects degenerate input")
{
    const AmdpModel one(1, 1, 1, {1}, {0.5});
    CHECK_THROWS_AS(make_config(one, 10, 1), ValidationError);
    const auto m = testing::random_model(3, 2, 2, 4);
    CHECK_THROWS_AS(make_config(m, 0, 1), ValidationError);
    CHECK_THROWS_AS(make_config(m, 10, 0), ValidationError);
    const AmdpModel big(2, 1, 2, {0.5, 0.5, 0.5, 0.5}, {1, 1, 1, 1, 1, 1, 1, 1});
    CHECK_THROWS_AS(make_config(big, 10, 1, 1.0), ValidationError);
    CHECK_NOTHROW(make_config(big, 10, 1));
}

TEST_CASE("local dual increment by hand")
{
    const auto cfg = manual_config(1, 0.1, 5.0);
    const Transition t{0, 0, 1, {1.0}};
    const PrimalValue v{{0.0, 0.0}};
    CHECK(local_dual_increment(0, t, v, 0.0, cfg) == doctest::Approx(-0.4).epsilon(1e-15));

    AgentDualTable table = AgentDualTable::initial(2, 2);
    const auto before = table.log_mu;
    CHECK(local_dual_update(table, 0, t, v, 0.0, cfg) == doctest::Approx(-0.4));
    CHECK(table.log_mu[0] == doctest::Approx(before[0] - 0.4).epsilon(1e-15));
    for (std::size_t k = 1; k < 4; ++k)
        CHECK(table.log_mu[k] == before[k]);
}

TEST_CASE("local dual increment vanishes at its fixed point")
{
    const auto cfg = manual_config(2, 0.25, 6.0);
    const PrimalValue v{{0.5, -0.5}};
    const double log_x = 0.75;
    const double r = (6.0 - (-0.5) + 0.5 - log_x / 0.25) / 2.0;
    const Transition t{0, 1, 1, {r, r}};
    CHECK(std::abs(local_dual_increment(0, t, v, log_x, cfg)) <= 1e-15);
}

TEST_CASE("non-finite increments are invariant failures")
{
    const auto cfg = manual_config(1, 0.1, 5.0);
    AgentDualTable table = AgentDualTable::initial(2, 1);
    const PrimalValue v{{std::nan(""), 0.0}};
    CHECK_THROWS_AS(local_dual_update(table, 0, Transition{0, 0, 1, {0.0}}, v, 0.0, cfg),
                    InvariantError);
}

TEST_CASE("aggregate votes")
{
    SUBCASE("uniform tables")
    {
        std::vector<AgentDualTable> agents(2, AgentDualTable::initial(2, 2));
        const auto g = aggregate_votes(agents);
        for (double x : g.mu_g)
            CHECK(x == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(std::exp(g.log_x) == doctest::Approx(4.0).epsilon(1e-14));
    }
    SUBCASE("single agent")
    {
        std::vector<AgentDualTable> agents{{{std::log(0.1), std::log(0.2), std::log(0.3)}}};
        const auto g = aggregate_votes(agents);
        CHECK(g.mu_g[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
        CHECK(g.mu_g[2] == doctest::Approx(0.5).epsilon(1e-14));
    }
    SUBCASE("three random tables against extended precision")
    {
        RngStream rng(8);
        std::vector<AgentDualTable> agents(3);
        for (auto& a : agents)
            for (int k = 0; k < 6; ++k)
                a.log_mu.push_back(-5.0 * rng.uniform());
        long double prod[6], z = 0.0L;
        for (int k = 0; k < 6; ++k) {
            prod[k] = 1.0L;
            for (const auto& a : agents)
                prod[k] *= std::exp(static_cast<long double>(a.log_mu[static_cast<std::size_t>(k)]));
            z += prod[k];
        }
        const auto g = aggregate_votes(agents);
        for (int k = 0; k < 6; ++k)
            CHECK(std::abs(g.mu_g[static_cast<std::size_t>(k)] - static_cast<double>(prod[k] / z)) <= 1e-15);
        CHECK(std::abs(g.log_x + static_cast<double>(std::log(z))) <= 1e-14);
    }
    SUBCASE("corrupt input")
    {
        std::vector<AgentDualTable> bad{{{-INFINITY, -INFINITY}}};
        CHECK_THROWS_AS(aggregate_votes(bad), InvariantError);
        std::vector<AgentDualTable> ragged{{{0.0, 0.0}}, {{0.0}}};
        CHECK_THROWS_AS(aggregate_votes(ragged), ValidationError);
    }
}

TEST_CASE("primal update")
{
    const auto cfg = manual_config(1, 0.1, 5.0, 0.3, 1);
    PrimalValue v{{0.0, 0.0, 0.0}};
    local_primal_update(v, Transition{1, 0, 1, {0.0}}, cfg);
    CHECK(v.v == std::vector<double>{0.0, 0.0, 0.0});
    local_primal_update(v, Transition{0, 0, 1, {0.0}}, cfg);
    CHECK(v.v[0] == doctest::Approx(0.3));
    CHECK(v.v[1] == doctest::Approx(-0.3));
    CHECK(v.v[2] == 0.0);
    PrimalValue edge{{2.0, 0.0}};
    local_primal_update(edge, Transition{0, 0, 1, {0.0}}, cfg);
    CHECK(edge.v[0] == 2.0);
    CHECK(edge.v[1] == doctest::Approx(-0.3));
}

TEST_CASE("dual phase samples are uniform")
{
    const AmdpModel one(1, 1, 1, {1}, {0});
    RngStream rng(1);
    for (int k = 0; k < 10; ++k) {
        const auto t = dual_phase_sample(rng, one);
        CHECK(t.state == 0);
        CHECK(t.action == 0);
    }
    const auto m = testing::random_model(2, 2, 1, 6);
    const std::size_t n = 1'000'000;
    std::vector<std::size_t> counts(4, 0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto t = dual_phase_sample(rng, m);
        ++counts[t.state * 2 + t.action];
    }
    for (auto c : counts)
        CHECK(std::abs(static_cast<double>(c) / n - 0.25) <= 3.0 * std::sqrt(0.1875 / n));
    RngStream a(5), b(5);
    for (int k = 0; k < 100; ++k) {
        const auto ta = dual_phase_sample(a, m);
        const auto tb = dual_phase_sample(b, m);
        CHECK(ta.state == tb.state);
        CHECK(ta.action == tb.action);
        CHECK(ta.next_state == tb.next_state);
    }
}

TEST_CASE("primal phase samples follow the global dual")
{
    const auto m = testing::random_model(2, 2, 1, 7);
    RngStream rng(2);
    const GlobalDual point{{0.0, 0.0, 1.0, 0.0}, 0.0};
    for (int k = 0; k < 100; ++k) {
        const auto t = primal_phase_sample(point, rng, m);
        CHECK(t.state == 1);
        CHECK(t.action == 0);
    }
    const GlobalDual uni{{0.25, 0.25, 0.25, 0.25}, 0.0};
    const std::size_t n = 1'000'000;
    std::vector<std::size_t> counts(4, 0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto t = primal_phase_sample(uni, rng, m);
        ++counts[t.state * 2 + t.action];
    }
    for (auto c : counts)
        CHECK(std::abs(static_cast<double>(c) / n - 0.25) <= 4.0 * std::sqrt(0.1875 / n));
    RngStream a(3), b(3);
    for (int k = 0; k < 100; ++k)
        CHECK(primal_phase_sample(uni, a, m).state == primal_phase_sample(uni, b, m).state);
}

TEST_CASE("centralized step on a single pair")
{
    const AmdpModel one(1, 1, 1, {1}, {0.5});
    const auto cfg = manual_config(1, 0.2, 5.0);
    GlobalDual g{{1.0}, 0.0};
    PrimalValue v{{0.0}};
    RngStream rng(1);
    for (int k = 0; k < 20; ++k) {
        std::tie(g, v) = centralized_step(g, v, rng, one, cfg);
        CHECK(g.mu_g[0] == 1.0);
        CHECK(v.v[0] == 0.0);
    }
}

TEST_CASE("global increments are never positive")
{
    const auto m = testing::random_model(4, 3, 3, 9);
    const auto cfg = make_config(m, 1000, 2);
    RngStream rng(4);
    for (int k = 0; k < 5000; ++k) {
        PrimalValue v{{}};
        for (int i = 0; i < 4; ++i)
            v.v.push_back((2.0 * rng.uniform() - 1.0) * cfg.radius());
        const auto t = dual_phase_sample(rng, m);
        CHECK(global_dual_increment(v, t, cfg) <= 0.0);
    }
}

TEST_CASE("distributed and centralized trajectories coincide")
{
    const auto m = testing::random_model(5, 3, 4, 10);
    const auto cfg = make_config(m, 3000, 2);
    VotingLearner dist(m, cfg, RngStream(77), LearnerMode::distributed);
    VotingLearner cent(m, cfg, RngStream(77), LearnerMode::centralized);
    double worst = 0.0;
    for (int t = 0; t < 3000; ++t) {
        const auto rd = dist.step();
        const auto rc = cent.step();
        REQUIRE(rd.dual.state == rc.dual.state);
        REQUIRE(rd.primal.next_state == rc.primal.next_state);
        worst = std::max(worst, max_abs_diff(dist.global_dual().mu_g, cent.global_dual().mu_g));
        worst = std::max(worst, max_abs_diff(dist.primal().v, cent.primal().v));
        for (const auto& copy : dist.agent_primals())
            REQUIRE(copy.v == dist.primal().v);
    }
    CHECK(worst <= 1e-12);
    CHECK(max_abs_diff(dist.averaged_policy().probs(), cent.averaged_policy().probs()) <= 1e-12);

    // the free function reproduces the centralized learner
    GlobalDual g{std::vector<double>(15, 1.0 / 15.0), 0.0};
    PrimalValue v{std::vector<double>(5, 0.0)};
    RngStream rng(77);
    VotingLearner ref(m, cfg, RngStream(77), LearnerMode::centralized);
    for (int t = 0; t < 500; ++t) {
        std::tie(g, v) = centralized_step(g, v, rng, m, cfg);
        ref.step();
    }
    CHECK(max_abs_diff(g.mu_g, ref.global_dual().mu_g) <= 1e-12);
    CHECK(max_abs_diff(v.v, ref.primal().v) <= 1e-12);
}

TEST_CASE("log x term shifts the product by x")
{
    const auto m = testing::random_model(3, 2, 3, 12);
    auto cfg = make_config(m, 1000, 1);
    cfg.include_log_x = true;
    VotingLearner dist(m, cfg, RngStream(5), LearnerMode::distributed);
    for (int t = 0; t < 50; ++t)
        dist.step();
    const GlobalDual before = aggregate_votes(dist.agents());
    const PrimalValue v = dist.primal();
    std::vector<AgentDualTable> agents(dist.agents().begin(), dist.agents().end());
    RngStream rng(99);
    const auto t = dual_phase_sample(rng, m);
    const std::size_t k = t.state * 2 + t.action;
    for (AgentId a = 0; a < 3; ++a)
        local_dual_update(agents[a], a, t, v, before.log_x, cfg);
    double log_prod = 0.0;
    for (const auto& a : agents)
        log_prod += a.log_mu[k];
    // updated product entry equals the unnormalised centralized weight mu_g e^{Delta^g}
    const double expected = std::log(before.mu_g[k]) + global_dual_increment(v, t, cfg);
    CHECK(std::abs(log_prod - expected) <= 1e-12);

    // with the term the normalised trajectories separate from the centralized one
    VotingLearner with_x(m, cfg, RngStream(6), LearnerMode::distributed);
    auto plain = cfg;
    plain.include_log_x = false;
    VotingLearner cent(m, plain, RngStream(6), LearnerMode::centralized);
    for (int s = 0; s < 200; ++s) {
        with_x.step();
        cent.step();
    }
    CHECK(max_abs_diff(with_x.global_dual().mu_g, cent.global_dual().mu_g) > 1e-3);
}

TEST_CASE("one iteration returns the uniform policy")
{
    const auto m = testing::random_model(3, 4, 2, 14);
    for (auto avg : {PolicyAveraging::product, PolicyAveraging::normalized}) {
        auto cfg = make_config(m, 1, 1);
        cfg.averaging = avg;
        const auto res = run(m, cfg, RngStream(1), LearnerMode::distributed);
        for (double p : res.policy.probs())
            CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(res.iterations == 1);
    }
    auto cfg = make_config(m, 1, 1);
    cfg.horizon = 0;
    CHECK_THROWS_AS(run(m, cfg, RngStream(1), LearnerMode::distributed), ValidationError);
}

TEST_CASE("policy averages match direct accumulation")
{
    const auto m = testing::random_model(3, 2, 2, 15);
    for (auto avg : {PolicyAveraging::product, PolicyAveraging::normalized}) {
        auto cfg = make_config(m, 50, 1);
        cfg.averaging = avg;
        VotingLearner learner(m, cfg, RngStream(2), LearnerMode::distributed);
        std::vector<long double> acc(6, 0.0L);
        for (int t = 0; t < 400; ++t) {
            long double z = 0.0L;
            std::vector<long double> prod(6);
            for (std::size_t k = 0; k < 6; ++k) {
                prod[k] = 1.0L;
                for (const auto& a : learner.agents())
                    prod[k] *= std::exp(static_cast<long double>(a.log_mu[k]));
                z += prod[k];
            }
            for (std::size_t k = 0; k < 6; ++k)
                acc[k] += avg == PolicyAveraging::product ? prod[k] : prod[k] / z;
            learner.step();
        }
        const auto pi = learner.averaged_policy();
        for (StateId i = 0; i < 3; ++i) {
            const long double row = acc[i * 2] + acc[i * 2 + 1];
            for (ActionId a = 0; a < 2; ++a)
                CHECK(std::abs(pi(i, a) - static_cast<double>(acc[i * 2 + a] / row)) <= 1e-12);
        }
        CHECK(learner.underflow_rows() == 0);
    }
}

TEST_CASE("communication ledger")
{
    for (std::size_t M : {1u, 5u, 100u}) {
        const auto m = testing::random_model(4, 3, M, 20 + M);
        const auto cfg = make_config(m, 200, 1);
        const auto res = run(m, cfg, RngStream(3), LearnerMode::distributed);
        const auto per = CommLedger::expected_per_iteration(M);
        CHECK(per.up == M);
        CHECK(per.down == 2 * M + 6);
        CHECK(res.ledger.constant_per_iteration);
        CHECK(res.ledger.last_iteration == per);
        CHECK(res.ledger.iterations == 200);
        CHECK(res.ledger.scalars_up == 200 * per.up);
        CHECK(res.ledger.scalars_down == 200 * per.down);
        const auto cent = run(m, cfg, RngStream(3), LearnerMode::centralized);
        CHECK(cent.ledger.total() == 0);
    }
    std::vector<AgentDualTable> agents(5, AgentDualTable::initial(4, 3));
    const auto mock = simulate_parameter_consensus(agents, 10);
    CHECK(mock.last_iteration == parameter_consensus_per_iteration(4, 3, 5));
    CHECK(mock.last_iteration.total() == 2 * 5 * 4 * 3);
    CHECK(mock.total() == 10 * 2 * 5 * 4 * 3);
}

TEST_CASE("checkpoints resume bit for bit")
{
    const auto m = testing::random_model(4, 3, 3, 16);
    for (auto mode : {LearnerMode::distributed, LearnerMode::centralized})
        for (auto avg : {PolicyAveraging::product, PolicyAveraging::normalized}) {
            auto cfg = make_config(m, 1000, 1);
            cfg.averaging = avg;
            VotingLearner full(m, cfg, RngStream(8), mode);
            VotingLearner half(m, cfg, RngStream(8), mode);
            full.track_costs(std::vector<double>(12, 0.5));
            half.track_costs(std::vector<double>(12, 0.5));
            for (int t = 0; t < 500; ++t) {
                full.step();
                half.step();
            }
            const auto text = half.checkpoint().dump();
            VotingLearner resumed = VotingLearner::resume(m, cfg, nlohmann::json::parse(text));
            for (int t = 0; t < 500; ++t) {
                full.step();
                resumed.step();
            }
            CHECK(resumed.iteration() == full.iteration());
            CHECK(resumed.global_dual().mu_g == full.global_dual().mu_g);
            CHECK(resumed.primal().v == full.primal().v);
            CHECK(resumed.averaged_policy().probs() == full.averaged_policy().probs());
            CHECK(resumed.mean_tracked_cost() == full.mean_tracked_cost());
            CHECK(resumed.ledger().total() == full.ledger().total());
            CHECK(resumed.rng().draws() == full.rng().draws());
        }
    const auto cfg = make_config(m, 1000, 1);
    CHECK_THROWS_AS(VotingLearner::resume(m, cfg, nlohmann::json::parse(R"({"t": 1})")),
                    ValidationError);
}

TEST_CASE("invariant monitor catches a corrupted offset")
{
    const auto m = testing::random_model(3, 2, 2, 17);
    auto cfg = make_config(m, 100, 1);
    cfg.offset = 0.0;
    VotingLearner bad(m, cfg, RngStream(1), LearnerMode::distributed);
    CHECK_THROWS_AS(
        [&] {
            for (int t = 0; t < 100; ++t)
                bad.step();
        }(),
        InvariantError);
    cfg.check_invariants = false;
    VotingLearner unchecked(m, cfg, RngStream(1), LearnerMode::distributed);
    CHECK_NOTHROW(unchecked.step());
}

TEST_CASE("log-domain weights survive long runs")
{
    const auto m = testing::random_model(3, 3, 2, 18);
    const auto cfg = make_config(m, 4, 1); // large steps
    VotingLearner learner(m, cfg, RngStream(2), LearnerMode::distributed);
    for (int t = 0; t < 100'000; ++t)
        learner.step();
    double mass = 0.0;
    for (double x : learner.global_dual().mu_g) {
        CHECK(std::isfinite(x));
        mass += x;
    }
    CHECK(std::abs(mass - 1.0) <= 1e-12);
    for (const auto& a : learner.agents())
        for (double x : a.log_mu)
            CHECK(std::isfinite(x));
    CHECK(learner.weights().log_weight(0) < -100.0);
}

TEST_CASE("dual weights")
{
    DualWeights w({std::log(0.2), std::log(0.3), std::log(0.5)});
    CHECK(w.probability(2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w.sample(0.1) == 0);
    CHECK(w.sample(0.3) == 1);
    CHECK(w.sample(0.99) == 2);
    CHECK(w.log_total() == doctest::Approx(0.0).epsilon(1e-15));
    w.set_log_weight(0, 50.0);
    CHECK(w.probability(0) == doctest::Approx(1.0).epsilon(1e-15));
    w.set_log_weight(0, -200.0);
    CHECK(w.probability(2) == doctest::Approx(0.625).epsilon(1e-14));
    const std::vector<double> values{1.0, 2.0, 3.0};
    CHECK(w.expectation(values) == doctest::Approx(2.625).epsilon(1e-14));
    CHECK_THROWS_AS(w.set_log_weight(1, NAN), InvariantError);
}

TEST_CASE("geometric checkpoints")
{
    const auto c = geometric_checkpoints(1000);
    CHECK(c.front() == 1);
    CHECK(c.back() == 1000);
    for (std::size_t k = 1; k < c.size(); ++k)
        CHECK(c[k] > c[k - 1]);
    CHECK(geometric_checkpoints(1) == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(geometric_checkpoints(10, 1.0), ValidationError);
}

TEST_CASE("run callbacks fire at checkpoints")
{
    const auto m = testing::random_model(3, 2, 2, 19);
    const auto cfg = make_config(m, 100, 1);
    RunCallbacks cb;
    cb.checkpoints = {10, 1, 100, 50};
    std::vector<std::size_t> seen;
    std::size_t steps = 0;
    cb.on_checkpoint = [&](const RunSnapshot& s) { seen.push_back(s.t); };
    cb.on_step = [&](const StepRecord&, const VotingLearner&) { ++steps; };
    run(m, cfg, RngStream(1), LearnerMode::centralized, cb);
    CHECK(seen == std::vector<std::size_t>{1, 10, 50, 100});
    CHECK(steps == 100);
}
