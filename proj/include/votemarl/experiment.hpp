#pragma once

#include "votemarl/instance_gen.hpp"
#include "votemarl/learner.hpp"
#include "votemarl/oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace votemarl {

struct ExperimentConfig {
    GenSpec spec;                                  ///< template; n_agents and seed set per run
    std::vector<std::filesystem::path> model_paths; ///< used instead of generation when non-empty
    std::size_t horizon = 100'000;
    std::size_t n_instances = 1;
    std::vector<std::uint64_t> seeds{0};
    std::vector<std::size_t> m_sweep{5};
    std::vector<LearnerMode> modes{LearnerMode::distributed};
    bool include_log_x = false;
    PolicyAveraging averaging = PolicyAveraging::normalized;
    double checkpoint_ratio = 1.25;
    std::optional<std::size_t> t_mix_override;
    std::size_t t_mix_cap = 10'000;
    std::optional<double> reward_bound; ///< default: 1 under total_unit, else M
    bool use_oracle = true;
    std::size_t workers = 1;
    double wall_limit_s = 0.0;          ///< per-run ceiling; 0 disables
    std::filesystem::path output_dir = "out";

    /// Throws ValidationError before any run starts.
    void validate() const;
    std::size_t instance_count() const;
};

struct MetricsRow {
    std::size_t instance = 0;
    std::uint64_t seed = 0;
    LearnerMode mode = LearnerMode::distributed;
    std::size_t n_agents = 0;
    std::size_t t = 0;
    double duality_gap = 0.0;
    double policy_l1 = 0.0;
    double kl_dual = 0.0;
    std::uint64_t comm_scalars = 0;
    double wall_ms = 0.0;
};

/// "instance,seed,mode,M,t,duality_gap,policy_l1,kl_dual,comm_scalars,wall_ms"
const char* metrics_csv_header();
std::string to_csv(const MetricsRow& row);
MetricsRow metrics_row_from_csv(const std::string& line);

/// Model plus oracle quantities for one (instance, M) pair.
struct PreparedInstance {
    std::size_t id = 0;
    std::size_t n_agents = 0;
    AmdpModel model;
    std::optional<SolveResult> solve;
    MixingEstimate mixing;
    std::vector<std::string> warnings;
};

PreparedInstance prepare_instance(const ExperimentConfig& cfg, std::size_t id, std::size_t n_agents);

struct RunSpec {
    std::size_t instance = 0;
    std::uint64_t seed = 0;
    LearnerMode mode = LearnerMode::distributed;
    std::size_t n_agents = 0;
};

/// Learner stream for a run; independent of mode and M so those comparisons share samples.
RngStream run_stream(std::uint64_t seed, std::size_t instance);

struct RunOutcome {
    std::vector<MetricsRow> rows;
    StochasticPolicy policy;
    CommLedger ledger;
    bool completed = true;
};

/**
 * One learner run with metrics at the checkpoints. Gap, policy distance and
 * KL need the oracle; without it they are NaN. on_row fires as each row is
 * produced. The run stops early, with completed = false, once wall_limit_s
 * is exceeded.
 */
RunOutcome run_traced(const PreparedInstance& instance, const LearnerConfig& cfg,
                      const RunSpec& spec, const std::vector<std::size_t>& checkpoints,
                      double wall_limit_s = 0.0,
                      const std::function<void(const MetricsRow&)>& on_row = {});

LearnerConfig learner_config(const ExperimentConfig& cfg, const PreparedInstance& instance);

struct AggregateRow {
    LearnerMode mode = LearnerMode::distributed;
    std::size_t n_agents = 0;
    std::size_t t = 0;
    std::size_t n = 0;
    double gap_mean = 0.0, gap_se = 0.0;
    double l1_mean = 0.0, l1_se = 0.0;
    double kl_mean = 0.0, kl_se = 0.0;
    double comm_mean = 0.0;
};

/// Mean and standard error per (mode, M, t), sorted by that key; independent of row order.
std::vector<AggregateRow> aggregate(std::span<const MetricsRow> rows);
const char* aggregate_csv_header();
std::string to_csv(const AggregateRow& row);

/// Least-squares slope of log y against log t over points with t in [t_lo, t_hi].
double loglog_slope(std::span<const double> t, std::span<const double> y, double t_lo, double t_hi);

struct SlopeSummary {
    LearnerMode mode = LearnerMode::distributed;
    std::size_t n_agents = 0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    double slope = 0.0;
};

/// Slope of log mean gap over [t_hi / 10, t_hi] per (mode, M).
std::vector<SlopeSummary> slope_summary(std::span<const AggregateRow> rows, std::size_t horizon);

struct ExperimentResult {
    std::vector<MetricsRow> rows;
    std::vector<AggregateRow> aggregate;
    std::vector<SlopeSummary> slopes;
    std::size_t incomplete_runs = 0;
};

/**
 * Every (instance, seed, M, mode) run on a worker pool. Each run streams its
 * rows to runs/<tag>.csv, flushed per row, and writes runs/<tag>.policy.json.
 * When all runs finish the rows are merged in job order into metrics.csv,
 * with aggregate.csv and slopes.csv next to it.
 */
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream& log);

} // namespace votemarl
