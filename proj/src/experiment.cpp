#include "votemarl/experiment.hpp"

#include "votemarl/errors.hpp"
#include "votemarl/model_io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

namespace votemarl {

namespace {

std::string fmt(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double mean_of(const std::vector<double>& xs)
{
    double s = 0.0;
    for (double x : xs)
        s += x;
    return s / static_cast<double>(xs.size());
}

double se_of(const std::vector<double>& xs, double mean)
{
    if (xs.size() < 2)
        return 0.0;
    double ss = 0.0;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

std::string run_tag(const RunSpec& spec)
{
    std::ostringstream os;
    os << "i" << spec.instance << "_M" << spec.n_agents << "_s" << spec.seed << "_"
       << to_string(spec.mode);
    return os.str();
}

} // namespace

void ExperimentConfig::validate() const
{
    if (horizon == 0)
        throw ValidationError("experiment: horizon T must be at least 1");
    if (model_paths.empty() && n_instances == 0)
        throw ValidationError("experiment: n_instances must be at least 1");
    if (seeds.empty())
        throw ValidationError("experiment: at least one seed is required");
    if (m_sweep.empty())
        throw ValidationError("experiment: the agent sweep is empty");
    for (std::size_t m : m_sweep)
        if (m == 0)
            throw ValidationError("experiment: agent counts must be at least 1");
    if (modes.empty())
        throw ValidationError("experiment: at least one mode is required");
    if (!(checkpoint_ratio > 1.0))
        throw ValidationError("experiment: checkpoint ratio must exceed 1");
    if (t_mix_override && *t_mix_override == 0)
        throw ValidationError("experiment: t_mix override must be at least 1");
    if (reward_bound && !(*reward_bound > 0.0))
        throw ValidationError("experiment: reward bound must be positive");
    if (workers == 0)
        throw ValidationError("experiment: need at least one worker");
    if (wall_limit_s < 0.0)
        throw ValidationError("experiment: wall-time limit must be nonnegative");
    if (model_paths.empty())
        spec.validate();
    for (const auto& p : model_paths)
        if (!std::filesystem::exists(p))
            throw ValidationError("experiment: model file " + p.string() + " does not exist");
}

std::size_t ExperimentConfig::instance_count() const
{
    return model_paths.empty() ? n_instances : model_paths.size();
}

const char* metrics_csv_header()
{
    return "instance,seed,mode,M,t,duality_gap,policy_l1,kl_dual,comm_scalars,wall_ms";
}

std::string to_csv(const MetricsRow& row)
{
    std::ostringstream os;
    os << row.instance << ',' << row.seed << ',' << to_string(row.mode) << ',' << row.n_agents
       << ',' << row.t << ',' << fmt(row.duality_gap) << ',' << fmt(row.policy_l1) << ','
       << fmt(row.kl_dual) << ',' << row.comm_scalars << ',' << fmt(row.wall_ms);
    return os.str();
}

MetricsRow metrics_row_from_csv(const std::string& line)
{
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
        f.push_back(cell);
    if (f.size() != 10)
        throw ValidationError("metrics row: expected 10 fields in \"" + line + "\"");
    try {
        MetricsRow row;
        row.instance = std::stoull(f[0]);
        row.seed = std::stoull(f[1]);
        row.mode = learner_mode_from_string(f[2]);
        row.n_agents = std::stoull(f[3]);
        row.t = std::stoull(f[4]);
        row.duality_gap = std::stod(f[5]);
        row.policy_l1 = std::stod(f[6]);
        row.kl_dual = std::stod(f[7]);
        row.comm_scalars = std::stoull(f[8]);
        row.wall_ms = std::stod(f[9]);
        return row;
    } catch (const std::logic_error&) {
        throw ValidationError("metrics row: cannot parse \"" + line + "\"");
    }
}

PreparedInstance prepare_instance(const ExperimentConfig& cfg, std::size_t id, std::size_t n_agents)
{
    auto model = [&] {
        if (!cfg.model_paths.empty())
            return load_model(cfg.model_paths.at(id));
        GenSpec spec = cfg.spec;
        spec.n_agents = n_agents;
        spec.seed = cfg.spec.seed + id;
        return generate(spec).model;
    }();
    PreparedInstance out{id, model.n_agents(), std::move(model), std::nullopt, {}, {}};

    if (cfg.t_mix_override)
        out.mixing = mixing_override(*cfg.t_mix_override);
    else if (deterministic_policy_count(out.model) <= kEnumerationGuard)
        out.mixing = estimate_mixing_time(out.model, cfg.t_mix_cap);
    else
        out.mixing = dobrushin_mixing_bound(out.model, cfg.t_mix_cap);

    if (cfg.use_oracle) {
        out.solve = solve_rvi(out.model);
        out.solve->t_mix = out.mixing.t_mix;
        double vmax = 0.0;
        for (double x : out.solve->v_star)
            vmax = std::max(vmax, std::abs(x));
        if (vmax > 2.0 * static_cast<double>(out.mixing.t_mix)) {
            std::ostringstream os;
            os << "instance " << id << ": ||v*||_inf = " << vmax << " exceeds 2 t_mix = "
               << 2 * out.mixing.t_mix << "; the mixing estimate is too small";
            out.warnings.push_back(os.str());
        }
    }
    return out;
}

RngStream run_stream(std::uint64_t seed, std::size_t instance)
{
    return RngStream::derive(seed, 0x1000 + instance);
}

LearnerConfig learner_config(const ExperimentConfig& cfg, const PreparedInstance& instance)
{
    std::optional<double> bound = cfg.reward_bound;
    if (!bound && cfg.model_paths.empty() && cfg.spec.reward_cap == RewardCap::total_unit)
        bound = 1.0;
    LearnerConfig lc = make_config(instance.model, cfg.horizon, instance.mixing.t_mix, bound);
    lc.include_log_x = cfg.include_log_x;
    lc.averaging = cfg.averaging;
    return lc;
}

RunOutcome run_traced(const PreparedInstance& instance, const LearnerConfig& cfg,
                      const RunSpec& spec, const std::vector<std::size_t>& checkpoints,
                      double wall_limit_s, const std::function<void(const MetricsRow&)>& on_row)
{
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    VotingLearner learner(instance.model, cfg, run_stream(spec.seed, spec.instance), spec.mode);
    if (instance.solve)
        learner.track_costs(
            complementarity_costs(instance.model, expected_rewards(instance.model),
                                  instance.solve->v_star));

    auto marks = checkpoints;
    std::sort(marks.begin(), marks.end());
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
    auto next = marks.begin();

    RunOutcome out{{}, StochasticPolicy::uniform(instance.model.n_states(), instance.model.n_actions()),
                   {}, true};
    for (std::size_t t = 1; t <= cfg.horizon; ++t) {
        learner.step();
        while (next != marks.end() && *next < t)
            ++next;
        if (next != marks.end() && *next == t) {
            MetricsRow row;
            row.instance = spec.instance;
            row.seed = spec.seed;
            row.mode = spec.mode;
            row.n_agents = instance.model.n_agents();
            row.t = t;
            if (instance.solve) {
                const SolveResult& s = *instance.solve;
                row.duality_gap = s.v_bar_star + learner.mean_tracked_cost();
                row.policy_l1 = policy_l1_distance(learner.averaged_policy(), s.pi_star);
                row.kl_dual = kl_divergence(s.mu_star, learner.global_dual().mu_g);
            } else {
                row.duality_gap = row.policy_l1 = row.kl_dual = nan;
            }
            row.comm_scalars = learner.ledger().total();
            row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
            out.rows.push_back(row);
            if (on_row)
                on_row(row);
        }
        if (wall_limit_s > 0.0 && (t & 255) == 0 &&
            std::chrono::duration<double>(clock::now() - start).count() > wall_limit_s) {
            out.completed = false;
            break;
        }
    }
    out.policy = learner.averaged_policy();
    out.ledger = learner.ledger();
    return out;
}

std::vector<AggregateRow> aggregate(std::span<const MetricsRow> rows)
{
    using Key = std::tuple<int, std::size_t, std::size_t>;
    std::map<Key, std::vector<const MetricsRow*>> groups;
    for (const auto& row : rows)
        groups[{static_cast<int>(row.mode), row.n_agents, row.t}].push_back(&row);

    std::vector<AggregateRow> out;
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(), [](const MetricsRow* a, const MetricsRow* b) {
            return std::tie(a->instance, a->seed) < std::tie(b->instance, b->seed);
        });
        std::vector<double> gap, l1, kl, comm;
        for (const MetricsRow* r : members) {
            gap.push_back(r->duality_gap);
            l1.push_back(r->policy_l1);
            kl.push_back(r->kl_dual);
            comm.push_back(static_cast<double>(r->comm_scalars));
        }
        AggregateRow a;
        a.mode = members.front()->mode;
        a.n_agents = std::get<1>(key);
        a.t = std::get<2>(key);
        a.n = members.size();
        a.gap_mean = mean_of(gap);
        a.gap_se = se_of(gap, a.gap_mean);
        a.l1_mean = mean_of(l1);
        a.l1_se = se_of(l1, a.l1_mean);
        a.kl_mean = mean_of(kl);
        a.kl_se = se_of(kl, a.kl_mean);
        a.comm_mean = mean_of(comm);
        out.push_back(a);
    }
    return out;
}

const char* aggregate_csv_header()
{
    return "mode,M,t,n,gap_mean,gap_se,l1_mean,l1_se,kl_mean,kl_se,comm_mean";
}

std::string to_csv(const AggregateRow& row)
{
    std::ostringstream os;
    os << to_string(row.mode) << ',' << row.n_agents << ',' << row.t << ',' << row.n << ','
       << fmt(row.gap_mean) << ',' << fmt(row.gap_se) << ',' << fmt(row.l1_mean) << ','
       << fmt(row.l1_se) << ',' << fmt(row.kl_mean) << ',' << fmt(row.kl_se) << ','
       << fmt(row.comm_mean);
    return os.str();
}

double loglog_slope(std::span<const double> t, std::span<const double> y, double t_lo, double t_hi)
{
    if (t.size() != y.size())
        throw ValidationError("loglog_slope: t and y differ in length");
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= t_lo && t[k] <= t_hi && t[k] > 0.0 && y[k] > 0.0) {
            xs.push_back(std::log(t[k]));
            ys.push_back(std::log(y[k]));
        }
    if (xs.size() < 2)
        throw ValidationError("loglog_slope: fewer than two positive points in range");
    const double mx = mean_of(xs);
    const double my = mean_of(ys);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxy += (xs[k] - mx) * (ys[k] - my);
        sxx += (xs[k] - mx) * (xs[k] - mx);
    }
    if (sxx == 0.0)
        throw ValidationError("loglog_slope: all points share one t");
    return sxy / sxx;
}

std::vector<SlopeSummary> slope_summary(std::span<const AggregateRow> rows, std::size_t horizon)
{
    std::map<std::pair<int, std::size_t>, std::pair<std::vector<double>, std::vector<double>>> curves;
    for (const auto& r : rows) {
        auto& c = curves[{static_cast<int>(r.mode), r.n_agents}];
        c.first.push_back(static_cast<double>(r.t));
        c.second.push_back(r.gap_mean);
    }
    std::vector<SlopeSummary> out;
    for (const auto& [key, c] : curves) {
        SlopeSummary s;
        s.mode = static_cast<LearnerMode>(key.first);
        s.n_agents = key.second;
        s.t_hi = std::min(static_cast<double>(horizon), *std::max_element(c.first.begin(), c.first.end()));
        s.t_lo = s.t_hi / 10.0;
        try {
            s.slope = loglog_slope(c.first, c.second, s.t_lo, s.t_hi);
        } catch (const ValidationError&) {
            s.slope = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(s);
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream& log)
{
    cfg.validate();
    const auto runs_dir = cfg.output_dir / "runs";
    std::filesystem::create_directories(runs_dir);

    std::vector<PreparedInstance> prepared;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> lookup;
    const std::vector<std::size_t> sweep =
        cfg.model_paths.empty() ? cfg.m_sweep : std::vector<std::size_t>{0};
    for (std::size_t id = 0; id < cfg.instance_count(); ++id)
        for (std::size_t m : sweep) {
            prepared.push_back(prepare_instance(cfg, id, m));
            for (const auto& w : prepared.back().warnings)
                log << "warning: " << w << '\n';
            lookup[{id, m}] = prepared.size() - 1;
        }

    struct Job {
        RunSpec spec;
        std::size_t prepared;
    };
    std::vector<Job> jobs;
    for (std::size_t id = 0; id < cfg.instance_count(); ++id)
        for (std::size_t m : sweep)
            for (std::uint64_t seed : cfg.seeds)
                for (LearnerMode mode : cfg.modes) {
                    const std::size_t p = lookup.at({id, m});
                    jobs.push_back({{id, seed, mode, prepared[p].model.n_agents()}, p});
                }

    const auto checkpoints = geometric_checkpoints(cfg.horizon, cfg.checkpoint_ratio);
    std::vector<std::optional<RunOutcome>> outcomes(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;

    auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            const Job& job = jobs[k];
            try {
                const PreparedInstance& inst = prepared[job.prepared];
                const LearnerConfig lc = learner_config(cfg, inst);
                std::ofstream csv(runs_dir / (run_tag(job.spec) + ".csv"));
                csv << metrics_csv_header() << '\n' << std::flush;
                outcomes[k] = run_traced(inst, lc, job.spec, checkpoints, cfg.wall_limit_s,
                                         [&](const MetricsRow& row) {
                                             csv << to_csv(row) << '\n' << std::flush;
                                         });
                write_json_file(policy_to_json(outcomes[k]->policy),
                                runs_dir / (run_tag(job.spec) + ".policy.json"));
                std::lock_guard<std::mutex> lock(log_mutex);
                log << "run " << run_tag(job.spec)
                    << (outcomes[k]->completed ? " done" : " stopped at the wall-time limit") << '\n';
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const std::size_t n_workers = std::min(cfg.workers, std::max<std::size_t>(1, jobs.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    ExperimentResult result;
    for (const auto& o : outcomes) {
        result.rows.insert(result.rows.end(), o->rows.begin(), o->rows.end());
        if (!o->completed)
            ++result.incomplete_runs;
    }
    result.aggregate = aggregate(result.rows);
    result.slopes = slope_summary(result.aggregate, cfg.horizon);

    std::ofstream metrics(cfg.output_dir / "metrics.csv");
    metrics << metrics_csv_header() << '\n';
    for (const auto& r : result.rows)
        metrics << to_csv(r) << '\n';
    std::ofstream agg(cfg.output_dir / "aggregate.csv");
    agg << aggregate_csv_header() << '\n';
    for (const auto& r : result.aggregate)
        agg << to_csv(r) << '\n';
    std::ofstream slopes(cfg.output_dir / "slopes.csv");
    slopes << "mode,M,t_lo,t_hi,slope\n";
    for (const auto& s : result.slopes)
        slopes << to_string(s.mode) << ',' << s.n_agents << ',' << fmt(s.t_lo) << ','
               << fmt(s.t_hi) << ',' << fmt(s.slope) << '\n';
    if (!metrics || !agg || !slopes)
        throw ValidationError("experiment: cannot write results under " + cfg.output_dir.string());
    return result;
}

} // namespace votemarl
