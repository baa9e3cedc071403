#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lossbal/matrix.hpp"

namespace lossbal {

enum class TaskKind { regression_mse, binary_bce, multiclass_ce };

std::string_view task_kind_name(TaskKind kind) noexcept;
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
    std::string name;
    TaskKind kind = TaskKind::binary_bce;
    std::size_t output_dim = 1;
    /// Dominance knob. Regression targets are generated pre-multiplied by it;
    /// classification losses are multiplied by it.
    double loss_scale = 1.0;

    void validate() const;
    /// Factor passed to loss_and_grad. Regression carries its scale in the
    /// targets, so its multiplier is 1.
    double loss_multiplier() const noexcept { return kind == TaskKind::regression_mse ? 1.0 : loss_scale; }
    bool operator==(const TaskSpec&) const = default;
};

/// Immutable once generated.
struct Dataset {
    Matrix inputs;                 ///< n_samples x input_dim
    std::vector<Matrix> targets;   ///< one block per task, n_samples x output_dim (one-hot for multiclass)
    std::vector<TaskSpec> specs;
    std::vector<std::size_t> train; ///< ascending
    std::vector<std::size_t> test;  ///< ascending
    std::uint64_t seed = 0;
    double relatedness = 0.0;

    std::size_t tasks() const noexcept { return specs.size(); }
    std::size_t samples() const noexcept { return inputs.rows(); }
    /// Same samples and split restricted to a single task.
    Dataset single_task(std::size_t task) const;
    bool operator==(const Dataset&) const = default;
};

struct GeneratorOptions {
    std::size_t latent_dim = 8;
    /// Noise standard deviation relative to the task's pre-activation target spread.
    double noise_ratio = 0.1;
    double train_fraction = 0.8;
};

/// Targets come from y_k = f_k(W_k tanh(B x) + noise) with x ~ N(0, I), B shared,
/// and W_k = sqrt(rho) C + sqrt(1 - rho) W_k' mixing a common map C with an
/// independent W_k'. Noise mixes the same way so rho = 1 with identical specs
/// gives identical target blocks. Regression: identity then * loss_scale;
/// binary: > 0; multiclass: one-hot argmax.
Dataset generate_mtl(std::uint64_t seed, std::size_t input_dim, std::size_t n_samples,
                     std::span<const TaskSpec> specs, double relatedness, const GeneratorOptions& options = {});

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad; ///< d loss / d predictions
};

/// Mean-over-batch loss times `multiplier`, with its exact gradient.
/// MSE and BCE average over every element; CE averages over rows.
/// BCE/CE probabilities are clamped to [1e-12, 1 - 1e-12] before the log.
LossAndGrad loss_and_grad(TaskKind kind, const Matrix& predictions, const Matrix& targets, double multiplier = 1.0);

/// Named synthetic problem.
struct Scenario {
    std::string name;
    std::vector<TaskSpec> specs;
    std::size_t input_dim = 16;
    std::size_t n_samples = 2000;
    double relatedness = 0.5;
};

/// "celeb-mini": 8 binary tasks, the last scaled x50, 10000 samples.
/// "va-mini": 8-class emotion plus valence/arousal regressions, arousal scaled x20.
Scenario scenario_by_name(std::string_view name);

/// Text export: '# key = value' header lines, a column header, then one
/// comma-separated row per sample with its split label. 17 significant digits.
std::string export_dataset(const Dataset& data);
Dataset import_dataset(std::string_view text);

} // namespace lossbal
