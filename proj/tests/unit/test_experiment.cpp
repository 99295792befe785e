#include "votemarl/errors.hpp"
#include "votemarl/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <tuple>
#include <sstream>

using namespace votemarl;

namespace {

ExperimentConfig small_config(const std::string& name)
{
    ExperimentConfig c;
    c.spec.n_states = 4;
    c.spec.n_actions = 3;
    c.spec.seed = 2;
    c.horizon = 300;
    c.n_instances = 2;
    c.seeds = {1, 2};
    c.m_sweep = {2};
    c.modes = {LearnerMode::distributed, LearnerMode::centralized};
    c.output_dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(c.output_dir);
    return c;
}

} // namespace

TEST_CASE("metrics rows round-trip through csv")
{
    MetricsRow r{3, 7, LearnerMode::centralized, 5, 1000, 0.125, 1.5, 0.3, 42, 12.5};
    const auto back = metrics_row_from_csv(to_csv(r));
    CHECK(back.instance == 3);
    CHECK(back.mode == LearnerMode::centralized);
    CHECK(back.duality_gap == 0.125);
    CHECK(back.comm_scalars == 42);
    CHECK_THROWS_AS(metrics_row_from_csv("1,2,3"), ValidationError);
    CHECK(std::string(metrics_csv_header()) ==
          "instance,seed,mode,M,t,duality_gap,policy_l1,kl_dual,comm_scalars,wall_ms");
}

TEST_CASE("slope of a synthetic power law")
{
    std::vector<double> t, y;
    for (double x = 1; x <= 1e5; x *= 1.25) {
        t.push_back(x);
        y.push_back(1.0 / std::sqrt(x));
    }
    CHECK(std::abs(loglog_slope(t, y, 1e4, 1e5) + 0.5) <= 1e-6);
    CHECK_THROWS_AS(loglog_slope(t, y, 2e5, 3e5), ValidationError);
}

TEST_CASE("aggregation ignores row order")
{
    std::vector<MetricsRow> rows;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t t : {10u, 20u})
            rows.push_back({i, 1, LearnerMode::distributed, 5, t, 0.1 * (i + 1) / t, 0.5 * i, 0.2, 9, 0});
    const auto a = aggregate(rows);
    std::reverse(rows.begin(), rows.end());
    std::swap(rows[1], rows[6]);
    const auto b = aggregate(rows);
    REQUIRE(a.size() == 2);
    REQUIRE(b.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(a[k].gap_mean == b[k].gap_mean);
        CHECK(a[k].gap_se == b[k].gap_se);
        CHECK(a[k].n == 5);
    }
    CHECK(a[0].t == 10);
    CHECK(a[0].l1_mean == doctest::Approx(1.0));
}

TEST_CASE("harness runs produce matching traces for both modes")
{
    auto c = small_config("votemarl_exp_modes");
    const auto res = run_experiment(c, std::cerr);
    CHECK(res.incomplete_runs == 0);
    std::map<std::tuple<std::size_t, std::uint64_t, std::size_t>, double> dist, cent;
    for (const auto& r : res.rows) {
        CHECK(r.duality_gap >= -1e-9);
        CHECK(r.policy_l1 >= 0.0);
        CHECK(r.policy_l1 <= 2.0 * 4);
        auto& target = r.mode == LearnerMode::distributed ? dist : cent;
        target[{r.instance, r.seed, r.t}] = r.duality_gap;
    }
    REQUIRE(dist.size() == cent.size());
    for (const auto& [key, gap] : dist)
        CHECK(std::abs(gap - cent.at(key)) <= 1e-9);
    CHECK(std::filesystem::exists(c.output_dir / "metrics.csv"));
    CHECK(std::filesystem::exists(c.output_dir / "aggregate.csv"));
    CHECK(std::filesystem::exists(c.output_dir / "slopes.csv"));
    CHECK(std::filesystem::exists(c.output_dir / "runs" / "i0_M2_s1_distributed.policy.json"));

    std::ifstream in(c.output_dir / "runs" / "i1_M2_s2_centralized.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == metrics_csv_header());
    std::size_t prev = 0, n = 0;
    while (std::getline(in, line)) {
        const auto row = metrics_row_from_csv(line);
        CHECK(row.t > prev);
        prev = row.t;
        ++n;
    }
    CHECK(prev == 300);
    CHECK(n > 5);
    std::filesystem::remove_all(c.output_dir);
}

TEST_CASE("first checkpoint measures the uniform policy")
{
    auto c = small_config("votemarl_exp_first");
    c.n_instances = 1;
    c.seeds = {1};
    c.modes = {LearnerMode::distributed};
    const auto inst = prepare_instance(c, 0, 2);
    const auto uniform = StochasticPolicy::uniform(4, 3);
    const auto out = run_traced(inst, learner_config(c, inst), {0, 1, LearnerMode::distributed, 2}, {1});
    REQUIRE(out.rows.size() == 1);
    CHECK(out.rows[0].policy_l1 == doctest::Approx(policy_l1_distance(uniform, inst.solve->pi_star)));
}

TEST_CASE("runs without the oracle report NaN metrics")
{
    auto c = small_config("votemarl_exp_nooracle");
    c.use_oracle = false;
    const auto inst = prepare_instance(c, 0, 2);
    CHECK_FALSE(inst.solve.has_value());
    const auto out = run_traced(inst, learner_config(c, inst), {0, 1, LearnerMode::distributed, 2}, {10});
    CHECK(std::isnan(out.rows.at(0).duality_gap));
    CHECK(out.rows.at(0).comm_scalars == 10 * (2 + 10));
}

TEST_CASE("wall-time guard stops a run early")
{
    auto c = small_config("votemarl_exp_wall");
    c.horizon = 50'000'000;
    const auto inst = prepare_instance(c, 0, 2);
    const auto out = run_traced(inst, learner_config(c, inst), {0, 1, LearnerMode::distributed, 2},
                                geometric_checkpoints(c.horizon), 0.05);
    CHECK_FALSE(out.completed);
    CHECK_FALSE(out.rows.empty());
}

TEST_CASE("config validation happens before any run")
{
    auto c = small_config("votemarl_exp_invalid");
    c.m_sweep = {5, 0};
    CHECK_THROWS_AS(run_experiment(c, std::cerr), ValidationError);
    CHECK_FALSE(std::filesystem::exists(c.output_dir));
    c = small_config("votemarl_exp_invalid");
    c.horizon = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_config("votemarl_exp_invalid");
    c.model_paths = {"/nonexistent/model.json"};
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_config("votemarl_exp_invalid");
    c.seeds.clear();
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("normalised-total sweep gives matching gaps across agent counts")
{
    auto c = small_config("votemarl_exp_sweep");
    c.m_sweep = {1, 4, 9};
    c.modes = {LearnerMode::centralized};
    c.horizon = 500;
    const auto res = run_experiment(c, std::cerr);
    std::map<std::size_t, double> final_gap;
    for (const auto& a : res.aggregate)
        if (a.t == 500)
            final_gap[a.n_agents] = a.gap_mean;
    REQUIRE(final_gap.size() == 3);
    CHECK(std::abs(final_gap[1] - final_gap[9]) <= 1e-6);
    std::filesystem::remove_all(c.output_dir);
}
