#include "support.hpp"

#include "votemarl/errors.hpp"
#include "votemarl/model.hpp"
#include "votemarl/model_io.hpp"
#include "votemarl/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace votemarl;

TEST_CASE("rng streams replay and restore")
{
    RngStream a(42), b(42);
    for (int k = 0; k < 100; ++k)
        CHECK(a.next_u64() == b.next_u64());
    const auto saved = a.state();
    std::vector<double> first;
    for (int k = 0; k < 10; ++k)
        first.push_back(a.uniform());
    RngStream c;
    c.restore(saved);
    for (int k = 0; k < 10; ++k)
        CHECK(c.uniform() == first[static_cast<std::size_t>(k)]);
    CHECK(RngStream::derive(1, 2).next_u64() != RngStream::derive(1, 3).next_u64());
    for (int k = 0; k < 1000; ++k) {
        const double u = a.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(a.uniform_index(7) < 7);
    }
}

TEST_CASE("model construction rejects bad rows and rewards")
{
    CHECK_THROWS_AS(AmdpModel(1, 1, 1, {0.9}, {0.0}), ValidationError);
    CHECK_THROWS_AS(AmdpModel(2, 1, 1, {1.2, -0.2, 0.5, 0.5}, {0, 0, 0, 0}), ValidationError);
    CHECK_THROWS_AS(AmdpModel(1, 1, 1, {1.0}, {1.5}), ValidationError);
    CHECK_THROWS_AS(AmdpModel(1, 1, 1, {1.0}, {0.5, 0.5}), ValidationError);
    try {
        AmdpModel(2, 2, 1, {1, 0, 0.5, 0.5, 0.3, 0.6, 0, 1}, std::vector<double>(8, 0.0));
        FAIL("expected rejection");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("(1,0)") != std::string::npos);
    }
    CHECK_NOTHROW(AmdpModel(1, 1, 1, {1.0}, {1.0}));
}

TEST_CASE("sample_next on trivial rows")
{
    const AmdpModel single(1, 3, 2, {1, 1, 1}, std::vector<double>(6, 0.25));
    RngStream rng(3);
    for (ActionId a = 0; a < 3; ++a) {
        const Transition t = sample_next(single, 0, a, rng);
        CHECK(t.next_state == 0);
        CHECK(t.rewards.size() == 2);
    }
    const auto det = testing::deterministic_model(3, 1, 1, {2, 0, 1}, std::vector<double>(9, 0.0));
    for (int k = 0; k < 50; ++k)
        CHECK(sample_next(det, 0, 0, rng).next_state == 2);
    CHECK_THROWS_AS(sample_next(det, 3, 0, rng), std::out_of_range);
    CHECK_THROWS_AS(sample_next(det, 0, 1, rng), std::out_of_range);
}

TEST_CASE("sample_next frequencies match the stored row")
{
    const AmdpModel m(2, 1, 1, {0.3, 0.7, 0.5, 0.5}, {0.0, 1.0, 0.0, 0.0});
    RngStream rng(11);
    const std::size_t n = 1'000'000;
    std::size_t ones = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const Transition t = sample_next(m, 0, 0, rng);
        ones += t.next_state;
        CHECK(t.rewards[0] == (t.next_state == 1 ? 1.0 : 0.0));
    }
    const double freq = static_cast<double>(ones) / static_cast<double>(n);
    CHECK(std::abs(freq - 0.7) <= 3.0 * std::sqrt(0.21 / static_cast<double>(n)));
}

TEST_CASE("sample_next is reproducible per seed")
{
    const auto m = testing::random_model(4, 3, 2, 5);
    RngStream a(9), b(9);
    for (int k = 0; k < 200; ++k) {
        const auto ta = sample_next(m, 1, 2, a);
        const auto tb = sample_next(m, 1, 2, b);
        CHECK(ta.next_state == tb.next_state);
        CHECK(ta.rewards == tb.rewards);
    }
}

TEST_CASE("expected rewards")
{
    SUBCASE("constant reward")
    {
        const auto m = AmdpModel(2, 2, 2, {0.5, 0.5, 0.1, 0.9, 1, 0, 0.2, 0.8},
                                 std::vector<double>(16, 0.3));
        const auto rbar = expected_rewards(m);
        for (AgentId k = 0; k < 2; ++k)
            for (StateId i = 0; i < 2; ++i)
                for (ActionId a = 0; a < 2; ++a)
                    CHECK(rbar(k, i, a) == doctest::Approx(0.3).epsilon(1e-15));
    }
    SUBCASE("symmetric average")
    {
        const AmdpModel m(2, 1, 1, {0.5, 0.5, 0.5, 0.5}, {0.0, 1.0, 0.0, 0.0});
        CHECK(expected_rewards(m)(0, 0, 0) == 0.5);
    }
    SUBCASE("matches a loop in reverse order")
    {
        const auto m = testing::random_model(3, 2, 3, 17);
        const auto rbar = expected_rewards(m);
        for (AgentId k = 0; k < 3; ++k)
            for (StateId i = 0; i < 3; ++i)
                for (ActionId a = 0; a < 2; ++a) {
                    double s = 0.0;
                    for (std::size_t j = 3; j-- > 0;)
                        s += m.p(i, a, j) * m.r(k, i, a, j);
                    CHECK(std::abs(rbar(k, i, a) - s) <= 1e-14);
                    CHECK(rbar(k, i, a) >= 0.0);
                    CHECK(rbar(k, i, a) <= 1.0);
                }
        for (StateId i = 0; i < 3; ++i)
            CHECK(rbar.total(i, 1) == doctest::Approx(rbar(0, i, 1) + rbar(1, i, 1) + rbar(2, i, 1)));
    }
}

TEST_CASE("policy transition matrix")
{
    const auto m = testing::random_model(3, 2, 1, 23);
    SUBCASE("deterministic policy picks a slice")
    {
        const std::vector<ActionId> acts{1, 1, 1};
        const auto P = policy_transition_matrix(m, StochasticPolicy::deterministic(acts, 2));
        for (StateId i = 0; i < 3; ++i)
            for (StateId j = 0; j < 3; ++j)
                CHECK(P(i, j) == m.p(i, 1, j));
    }
    SUBCASE("uniform policy averages the slices")
    {
        const auto P = policy_transition_matrix(m, StochasticPolicy::uniform(3, 2));
        for (StateId i = 0; i < 3; ++i)
            for (StateId j = 0; j < 3; ++j)
                CHECK(P(i, j) == doctest::Approx(0.5 * (m.p(i, 0, j) + m.p(i, 1, j))).epsilon(1e-15));
    }
    SUBCASE("random policy rows sum to one")
    {
        RngStream rng(4);
        std::vector<double> probs(6);
        for (StateId i = 0; i < 3; ++i) {
            const double u = rng.uniform();
            probs[i * 2] = u;
            probs[i * 2 + 1] = 1.0 - u;
        }
        const auto P = policy_transition_matrix(m, StochasticPolicy(3, 2, probs));
        for (StateId i = 0; i < 3; ++i) {
            double s = 0.0;
            for (StateId j = 0; j < 3; ++j)
                s += P(i, j);
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("stochastic policy validation")
{
    CHECK_THROWS_AS(StochasticPolicy(1, 2, {0.5, 0.6}), ValidationError);
    CHECK_THROWS_AS(StochasticPolicy(1, 2, {1.5, -0.5}), ValidationError);
    CHECK_THROWS_AS(StochasticPolicy(2, 2, {0.5, 0.5}), ValidationError);
}

TEST_CASE("model files round-trip and reject bad input")
{
    const auto dir = std::filesystem::temp_directory_path() / "votemarl_model_io";
    std::filesystem::remove_all(dir);
    const auto m = testing::random_model(3, 2, 2, 31);
    save_model(m, dir / "m.json");
    const auto back = load_model(dir / "m.json");
    CHECK(back.transitions() == m.transitions());
    CHECK(back.rewards() == m.rewards());
    CHECK(back.n_agents() == 2);

    auto doc = model_to_json(m);
    doc["transitions"][1][0][0] = 0.9;
    CHECK_THROWS_AS(model_from_json(doc), ValidationError);
    doc = model_to_json(m);
    doc["rewards"][0].erase(0);
    CHECK_THROWS_AS(model_from_json(doc), ValidationError);
    doc = model_to_json(m);
    doc.erase("n_agents");
    CHECK_THROWS_AS(model_from_json(doc), ValidationError);
    CHECK_THROWS_AS(load_model(dir / "missing.json"), ValidationError);

    const auto pi = StochasticPolicy::uniform(3, 2);
    CHECK(policy_from_json(policy_to_json(pi)).probs() == pi.probs());
    std::filesystem::remove_all(dir);
}
