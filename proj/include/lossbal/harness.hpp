#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lossbal/balancers.hpp"
#include "lossbal/metrics.hpp"
#include "lossbal/network.hpp"
#include "lossbal/tasks.hpp"

namespace lossbal {

enum class OptimizerKind { adam, sgd };

/// Everything that determines a run. Parsed from key/value text; see README
/// for the schema. Unknown keys are rejected.
struct ExperimentConfig {
    std::string scenario = "celeb-mini";
    std::vector<TaskSpec> tasks;
    std::size_t input_dim = 16;
    std::size_t samples = 2000;
    double relatedness = 0.5;

    BalancerSettings balancer;
    NetworkShape network;

    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 1e-3;
    std::size_t iterations = 2000;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    std::size_t log_every = 10;
    std::string out_dir;

    /// Scenario tasks and data shape with default training settings.
    static ExperimentConfig from_scenario(std::string_view name);
    static ExperimentConfig parse(std::string_view text);
    /// Canonical key/value text; parse(echo()) reproduces the config.
    std::string echo() const;
    void validate() const;
};

/// Metric groups derived from task kinds: "binary" (F1), "multiclass"
/// (macro F1), "regression" (CCC). Each group contributes its mean.
CompositeConfig composite_for(std::span<const TaskSpec> tasks);

struct RunResult {
    ExperimentConfig config;
    std::vector<std::string> task_names;
    std::vector<double> test_losses;
    std::vector<double> test_metrics;
    double composite = 0.0;
    Trace trace;
    /// Raw losses of the very first batch (before any update).
    std::vector<double> first_losses;
    double wall_seconds = 0.0;

    /// Structured summary; excludes wall-clock time so output is reproducible.
    std::string to_json() const;
};

/// Non-finite loss or gradient during training.
class NumericalAbort : public std::runtime_error {
public:
    NumericalAbort(std::uint64_t iteration, std::string snapshot, const std::string& what)
        : std::runtime_error(what), iteration_(iteration), snapshot_(std::move(snapshot)) {}
    std::uint64_t iteration() const noexcept { return iteration_; }
    /// Balancer state at the point of failure.
    const std::string& snapshot() const noexcept { return snapshot_; }

private:
    std::uint64_t iteration_;
    std::string snapshot_;
};

/// Generate the data, train with the configured balancer, evaluate on the
/// test split. Bitwise reproducible for a fixed config.
RunResult run_experiment(const ExperimentConfig& config);
/// Train the architecture with only head `task` attached, on the same data
/// and batches, using equal weighting.
RunResult run_single_task(const ExperimentConfig& config, std::size_t task);
/// Train on an existing dataset. `first_head_id` selects the head
/// initialization streams (see init_params).
RunResult train_on(const ExperimentConfig& config, const Dataset& data, std::size_t first_head_id = 0);
/// Writes trace.csv, result.json and config.echo into `dir`.
void write_run_outputs(const RunResult& result, const std::string& dir);

struct NamedConfig {
    std::string name;
    ExperimentConfig config;
};

struct CompareOptions {
    /// Train single-task references per seed for normalized-loss statistics.
    bool single_task_references = true;
    /// Worker threads; 0 picks the hardware concurrency.
    std::size_t threads = 0;
};

/// One (config, seed) cell.
struct RunRecord {
    std::optional<RunResult> result;
    std::string error;
    /// test_loss_k / single-task test_loss_k (empty without references).
    std::vector<double> normalized_losses;
    double spread = 0.0;          ///< max/min of normalized_losses
    double dominated_loss = 0.0;  ///< mean normalized loss over tasks below the largest loss_scale
    double spikiness = 0.0;
};

struct MethodSummary {
    std::string name;
    std::size_t runs = 0;
    std::size_t failed = 0;
    double composite_mean = 0.0;
    double composite_std = 0.0; ///< population
    std::size_t wins = 0;
    double spread_median = 0.0;
    double dominated_loss_median = 0.0;
    double spikiness_mean = 0.0;
    std::vector<double> metric_mean, metric_std, loss_mean;
};

struct ComparisonReport {
    std::vector<std::string> names;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> task_names;
    bool has_references = false;
    /// [seed][task] single-task test losses.
    std::vector<std::vector<double>> reference_losses;
    /// [config][seed]
    std::vector<std::vector<RunRecord>> records;
    std::vector<MethodSummary> summary;

    /// Summary table, one row per config. Column order is documented in the README.
    std::string to_table() const;
    /// One row per (config, seed).
    std::string runs_table() const;
};

/// Configs must differ only in balancer settings (ConfigError otherwise).
/// Failed runs are recorded and the rest proceed.
ComparisonReport compare(std::span<const NamedConfig> configs, std::span<const std::uint64_t> seeds,
                         const CompareOptions& options = {});

struct SweepReport {
    std::string parameter;
    std::vector<double> values;
    std::vector<ComparisonReport> cells;

    std::string to_table() const;
};

/// parameter is one of beta, temperature, alpha, lr.
SweepReport sweep(const ExperimentConfig& config, std::string_view parameter, std::span<const double> values,
                  std::span<const std::uint64_t> seeds, const CompareOptions& options = {});

/// "1..10" (inclusive) or "3,5,8".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

} // namespace lossbal
