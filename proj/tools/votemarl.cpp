#include "votemarl/diagnostics.hpp"
#include "votemarl/errors.hpp"
#include "votemarl/experiment.hpp"
#include "votemarl/instance_gen.hpp"
#include "votemarl/learner.hpp"
#include "votemarl/model_io.hpp"
#include "votemarl/oracle.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace votemarl;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitOracle = 4;

struct SpecOptions {
    std::size_t states = 50;
    std::size_t actions = 10;
    std::size_t agents = 5;
    std::size_t support = 0;
    double bonus = 0.3;
    std::string cap = "total_unit";
    std::uint64_t seed = 0;
    bool shared = false;

    GenSpec to_spec() const
    {
        GenSpec s;
        s.n_states = states;
        s.n_actions = actions;
        s.n_agents = agents;
        s.support_size = support;
        s.favored_bonus = bonus;
        s.reward_cap = reward_cap_from_string(cap);
        s.seed = seed;
        s.shared_transitions = shared;
        return s;
    }
};

void add_spec_options(CLI::App* app, SpecOptions& o)
{
    app->add_option("--states", o.states, "number of states")->capture_default_str();
    app->add_option("--actions", o.actions, "number of actions")->capture_default_str();
    app->add_option("--agents", o.agents, "number of agents")->capture_default_str();
    app->add_option("--support", o.support, "next states per (i,a); 0 = all")->capture_default_str();
    app->add_option("--bonus", o.bonus, "reward margin of the favored action")->capture_default_str();
    app->add_option("--cap", o.cap, "reward cap: total_unit or per_pair_unit")
        ->check(CLI::IsMember({"total_unit", "per_pair_unit"}))
        ->capture_default_str();
    app->add_option("--seed", o.seed, "base seed; instance k uses seed + k")->capture_default_str();
    app->add_flag("--shared-transitions", o.shared, "all actions share a state's transition row");
}

struct RunOptions {
    SpecOptions spec;
    std::vector<std::string> models;
    std::size_t horizon = 100'000;
    std::size_t n_instances = 1;
    std::vector<std::uint64_t> seeds{0};
    std::vector<std::size_t> m_sweep;
    std::vector<std::string> modes{"distributed"};
    bool include_log_x = false;
    std::string averaging = "normalized";
    double checkpoint_ratio = 1.25;
    std::optional<std::size_t> t_mix;
    std::size_t t_mix_cap = 10'000;
    std::optional<double> reward_bound;
    bool no_oracle = false;
    std::size_t workers = 1;
    double wall_limit = 0.0;
    std::string output = "out";
};

void add_run_options(CLI::App* app, RunOptions& o)
{
    add_spec_options(app, o.spec);
    app->add_option("--model", o.models, "model file(s); replaces generation");
    app->add_option("-T,--horizon", o.horizon, "iterations per run")->capture_default_str();
    app->add_option("--instances", o.n_instances, "generated instances")->capture_default_str();
    app->add_option("--seeds", o.seeds, "learner seeds")->capture_default_str();
    app->add_option("--sweep", o.m_sweep, "agent counts (overrides --agents)");
    app->add_option("--modes", o.modes, "distributed and/or centralized")
        ->check(CLI::IsMember({"distributed", "centralized"}))
        ->capture_default_str();
    app->add_flag("--include-log-x", o.include_log_x, "add log x to every local increment");
    app->add_option("--averaging", o.averaging, "policy average: normalized or product")
        ->check(CLI::IsMember({"normalized", "product"}))
        ->capture_default_str();
    app->add_option("--checkpoint-ratio", o.checkpoint_ratio, "geometric checkpoint ratio")
        ->capture_default_str();
    app->add_option("--tmix", o.t_mix, "mixing-time override");
    app->add_option("--tmix-cap", o.t_mix_cap, "largest mixing time searched")->capture_default_str();
    app->add_option("--reward-bound", o.reward_bound, "bound R on the summed reward");
    app->add_flag("--no-oracle", o.no_oracle, "skip the exact solve; gap metrics become NaN");
    app->add_option("--workers", o.workers, "parallel runs")->capture_default_str();
    app->add_option("--wall-limit", o.wall_limit, "per-run ceiling in seconds; 0 = none")
        ->capture_default_str();
    app->add_option("-o,--output", o.output, "output directory")
        ->envname("VOTEMARL_OUTPUT_DIR")
        ->capture_default_str();
}

ExperimentConfig to_experiment(const RunOptions& o)
{
    ExperimentConfig c;
    c.spec = o.spec.to_spec();
    for (const auto& m : o.models)
        c.model_paths.emplace_back(m);
    c.horizon = o.horizon;
    c.n_instances = o.n_instances;
    c.seeds = o.seeds;
    c.m_sweep = o.m_sweep.empty() ? std::vector<std::size_t>{o.spec.agents} : o.m_sweep;
    c.modes.clear();
    for (const auto& m : o.modes)
        c.modes.push_back(learner_mode_from_string(m));
    c.include_log_x = o.include_log_x;
    c.averaging = policy_averaging_from_string(o.averaging);
    c.checkpoint_ratio = o.checkpoint_ratio;
    c.t_mix_override = o.t_mix;
    c.t_mix_cap = o.t_mix_cap;
    c.reward_bound = o.reward_bound;
    c.use_oracle = !o.no_oracle;
    c.workers = o.workers;
    c.wall_limit_s = o.wall_limit;
    c.output_dir = o.output;
    return c;
}

int report_experiment(const ExperimentResult& r, const ExperimentConfig& c)
{
    std::cout << "runs: " << r.rows.size() << " rows written to " << (c.output_dir / "metrics.csv").string()
              << '\n';
    for (const auto& s : r.slopes)
        std::cout << "slope " << to_string(s.mode) << " M=" << s.n_agents << " over [" << s.t_lo
                  << ", " << s.t_hi << "]: " << s.slope << '\n';
    if (r.incomplete_runs > 0) {
        std::cerr << "error: " << r.incomplete_runs << " run(s) hit the wall-time limit\n";
        return kExitInvariant;
    }
    return 0;
}

int cmd_gen(const SpecOptions& o, std::size_t n, const std::string& output)
{
    if (n == 0)
        throw ValidationError("gen: --n must be at least 1");
    const std::filesystem::path dir = output;
    for (std::size_t k = 0; k < n; ++k) {
        GenSpec spec = o.to_spec();
        spec.seed = o.seed + k;
        const GeneratedInstance inst = generate(spec);
        const std::string stem = "instance_" + std::to_string(k);
        save_model(inst.model, dir / (stem + ".json"));
        write_json_file(sidecar_json(spec, inst), dir / (stem + ".meta.json"));
    }
    std::cout << "wrote " << n << " instance(s) to " << dir.string() << '\n';
    return 0;
}

int cmd_solve(const std::string& model_path, const std::string& output,
              std::optional<std::size_t> t_mix, std::size_t t_mix_cap, const RviOptions& rvi)
{
    const AmdpModel model = load_model(model_path);
    SolveResult result = solve_rvi(model, rvi);
    nlohmann::json doc;
    if (deterministic_policy_count(model) <= kEnumerationGuard) {
        const SolveResult brute = enumerate_policies(model);
        const double diff = std::abs(brute.v_bar_star - result.v_bar_star);
        if (diff > 1e-8) {
            std::ostringstream os;
            os << "solve: relative value iteration and policy enumeration disagree by " << diff;
            throw OracleError(os.str());
        }
        doc["enumeration_v_bar_star"] = brute.v_bar_star;
    } else {
        std::cerr << "warning: " << model.n_actions() << "^" << model.n_states()
                  << " deterministic policies exceed the enumeration guard; RVI result is not "
                     "cross-checked\n";
    }
    MixingEstimate mix;
    if (t_mix)
        mix = mixing_override(*t_mix);
    else if (deterministic_policy_count(model) <= kEnumerationGuard)
        mix = estimate_mixing_time(model, t_mix_cap);
    else
        mix = dobrushin_mixing_bound(model, t_mix_cap);
    result.t_mix = mix.t_mix;

    const ExpectedReward rbar = expected_rewards(model);
    const nlohmann::json base = solve_result_to_json(result);
    doc.update(base);
    doc["mixing_method"] = to_string(mix.method);
    doc["dual_feasibility_residual"] = dual_feasibility_residual(model, result.mu_star);
    doc["complementarity_gap"] =
        complementarity_gap(model, rbar, result.v_bar_star, result.v_star, result.mu_star);
    if (output.empty())
        std::cout << doc.dump(1) << '\n';
    else
        write_json_file(doc, output);
    return 0;
}

struct VerifyOptions {
    std::string model;
    SpecOptions spec;
    std::size_t horizon = 100'000;
    std::size_t steps = 2'000;
    std::size_t snapshots = 5;
    std::size_t samples = 100'000;
    std::size_t resamples = 10'000;
    std::uint64_t seed = 0;
    std::optional<std::size_t> t_mix;
    std::optional<double> reward_bound;
    std::optional<double> inject_c;
    std::string output;
};

int cmd_verify(const VerifyOptions& o)
{
    const AmdpModel model = o.model.empty() ? generate(o.spec.to_spec()).model : load_model(o.model);
    const SolveResult solve = solve_rvi(model);
    MixingEstimate mix;
    if (o.t_mix)
        mix = mixing_override(*o.t_mix);
    else if (deterministic_policy_count(model) <= kEnumerationGuard)
        mix = estimate_mixing_time(model, 10'000);
    else
        mix = dobrushin_mixing_bound(model, 10'000);
    std::optional<double> bound = o.reward_bound;
    if (!bound && o.model.empty() && o.spec.cap == "total_unit")
        bound = 1.0;
    LearnerConfig cfg = make_config(model, o.horizon, mix.t_mix, bound);
    if (o.inject_c)
        cfg.offset = *o.inject_c;
    if (o.snapshots == 0 || o.steps < o.snapshots)
        throw ValidationError("verify: need 1 <= snapshots <= steps");

    nlohmann::json report;
    report["t_mix"] = mix.t_mix;
    report["C"] = cfg.offset;
    bool ok = true;
    std::vector<std::size_t> marks;
    for (std::size_t k = 1; k <= o.snapshots; ++k)
        marks.push_back(k * o.steps / o.snapshots);

    RngStream check_rng = RngStream::derive(o.seed, 77);
    VotingLearner learner(model, cfg, RngStream::derive(o.seed, 1), LearnerMode::distributed);
    SecondMomentMonitor second;
    std::size_t next = 0;
    try {
        for (std::size_t t = 1; t <= o.steps; ++t) {
            second.add(learner.step());
            if (next < marks.size() && marks[next] == t) {
                ++next;
                const GlobalDual g = learner.global_dual();
                const auto& v = learner.primal().v;
                const auto unb = check_unbiasedness(model, g.mu_g, v, cfg, o.samples, check_rng);
                const auto kl = check_kl_improvement(model, g.mu_g, v, solve.mu_star, cfg,
                                                     o.resamples, check_rng);
                const auto pot =
                    check_potential_decrease(model, g.mu_g, v, solve, cfg, o.resamples, check_rng);
                ok = ok && unb.passed() && kl.passed() && pot.passed();
                report["snapshots"].push_back(
                    {{"t", t},
                     {"unbiasedness", {{"passed", unb.passed()}, {"flagged", unb.flagged},
                                       {"max_abs_z", unb.max_abs_z},
                                       {"max_conditional_sd", unb.max_conditional_sd}}},
                     {"kl_improvement", {{"passed", kl.passed()}, {"mean", kl.mean},
                                         {"se", kl.se}, {"bound", kl.bound},
                                         {"margin", kl.margin()}}},
                     {"potential_decrease", {{"passed", pot.passed()}, {"mean", pot.mean},
                                             {"se", pot.se}, {"bound", pot.bound},
                                             {"margin", pot.margin()}}}});
            }
        }
        report["invariants"] = {{"passed", true}, {"steps", o.steps}};
    } catch (const InvariantError& e) {
        ok = false;
        report["invariants"] = {{"passed", false}, {"error", e.what()}};
    }
    const auto sm = second.report(cfg, model.n_pairs());
    report["second_moment"] = {{"passed", sm.passed()}, {"mean", sm.mean}, {"se", sm.se},
                               {"bound", sm.bound}, {"margin", sm.margin()}};
    ok = ok && sm.passed();
    report["passed"] = ok;

    if (o.output.empty())
        std::cout << report.dump(1) << '\n';
    else
        write_json_file(report, o.output);
    std::cout << (ok ? "verify: PASS" : "verify: FAIL") << '\n';
    return ok ? 0 : kExitInvariant;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"voting-based primal-dual learning for multi-agent average-reward MDPs"};
    app.set_config("--config", "", "TOML/INI file of option values; flags override it");
    app.require_subcommand(1);

    SpecOptions gen_opts;
    std::size_t gen_n = 1;
    std::string gen_out = "instances";
    auto* gen = app.add_subcommand("gen", "generate random instances");
    add_spec_options(gen, gen_opts);
    gen->add_option("--n", gen_n, "number of instances")->capture_default_str();
    gen->add_option("-o,--output", gen_out, "output directory")
        ->envname("VOTEMARL_OUTPUT_DIR")
        ->capture_default_str();

    std::string solve_model, solve_out;
    std::optional<std::size_t> solve_tmix;
    std::size_t solve_tmix_cap = 10'000;
    RviOptions rvi;
    auto* solve = app.add_subcommand("solve", "exact solution of a model file");
    solve->add_option("model", solve_model, "model JSON")->required();
    solve->add_option("-o,--output", solve_out, "write JSON here instead of stdout");
    solve->add_option("--tmix", solve_tmix, "mixing-time override");
    solve->add_option("--tmix-cap", solve_tmix_cap, "largest mixing time searched")->capture_default_str();
    solve->add_option("--tol", rvi.tol, "Bellman residual tolerance")->capture_default_str();
    solve->add_option("--max-iter", rvi.max_iter, "iteration cap")->capture_default_str();

    RunOptions train_opts;
    auto* train = app.add_subcommand("train", "run the learner and record metric traces");
    add_run_options(train, train_opts);

    RunOptions sweep_opts;
    sweep_opts.m_sweep = {5, 20, 100};
    auto* sweep = app.add_subcommand("sweep", "agent-count sweep under a unit total-reward cap");
    add_run_options(sweep, sweep_opts);

    VerifyOptions verify_opts;
    auto* verify = app.add_subcommand("verify", "statistical and invariant checks on one model");
    add_spec_options(verify, verify_opts.spec);
    verify->add_option("--model", verify_opts.model, "model file; replaces generation");
    verify->add_option("-T,--horizon", verify_opts.horizon, "horizon used for the step sizes")
        ->capture_default_str();
    verify->add_option("--steps", verify_opts.steps, "trajectory length")->capture_default_str();
    verify->add_option("--snapshots", verify_opts.snapshots, "checked states")->capture_default_str();
    verify->add_option("--samples", verify_opts.samples, "draws per unbiasedness check")
        ->capture_default_str();
    verify->add_option("--resamples", verify_opts.resamples, "draws per one-step bound check")
        ->capture_default_str();
    verify->add_option("--run-seed", verify_opts.seed, "learner seed")->capture_default_str();
    verify->add_option("--tmix", verify_opts.t_mix, "mixing-time override");
    verify->add_option("--reward-bound", verify_opts.reward_bound, "bound R on the summed reward");
    verify->add_option("--inject-c", verify_opts.inject_c, "replace the offset C (negative control)");
    verify->add_option("-o,--output", verify_opts.output, "write the report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*gen)
            return cmd_gen(gen_opts, gen_n, gen_out);
        if (*solve)
            return cmd_solve(solve_model, solve_out, solve_tmix, solve_tmix_cap, rvi);
        if (*train) {
            const ExperimentConfig c = to_experiment(train_opts);
            return report_experiment(run_experiment(c, std::cerr), c);
        }
        if (*sweep) {
            const ExperimentConfig c = to_experiment(sweep_opts);
            if (c.model_paths.empty() && c.spec.reward_cap != RewardCap::total_unit)
                std::cerr << "warning: sweep without the total_unit cap; gaps scale with M\n";
            return report_experiment(run_experiment(c, std::cerr), c);
        }
        if (*verify)
            return cmd_verify(verify_opts);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const InvariantError& e) {
        std::cerr << "invariant violated: " << e.what() << '\n';
        return kExitInvariant;
    } catch (const OracleError& e) {
        std::cerr << "oracle failure: " << e.what() << '\n';
        return kExitOracle;
    } catch (const std::out_of_range& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitValidation;
}
