#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lossbal/balancers.hpp"
#include "lossbal/matrix.hpp"
#include "lossbal/tasks.hpp"

namespace lossbal {

enum class Activation { linear, relu, sigmoid, tanh, softmax };

std::string_view activation_name(Activation a) noexcept;
Activation parse_activation(std::string_view name);
/// Activation a task head ends with: linear for regression, sigmoid for
/// binary, softmax for multiclass.
Activation output_activation(TaskKind kind) noexcept;

/// y = act(x W + b). Weight is stored input-major (in x out).
struct DenseLayer {
    Matrix weight;
    std::vector<double> bias;
    Activation activation = Activation::linear;

    std::size_t inputs() const noexcept { return weight.rows(); }
    std::size_t outputs() const noexcept { return weight.cols(); }
    bool operator==(const DenseLayer&) const = default;
};

/// Hard parameter sharing: one trunk, one head per task.
struct ModelParams {
    std::vector<DenseLayer> trunk;
    std::vector<std::vector<DenseLayer>> heads;

    std::size_t tasks() const noexcept { return heads.size(); }
    std::size_t input_dim() const noexcept { return trunk.empty() ? 0 : trunk.front().inputs(); }
    std::size_t parameter_count() const noexcept;
    /// Throws ConfigError if adjacent layers do not chain.
    void validate() const;
    /// Same structure, all values zero.
    ModelParams zeros_like() const;
    bool operator==(const ModelParams&) const = default;
};

/// Flat views over every weight and bias, trunk first, in a fixed order.
std::vector<std::span<double>> parameter_tensors(ModelParams& params);
std::vector<std::span<const double>> parameter_tensors(const ModelParams& params);
/// Names matching parameter_tensors(), e.g. "trunk.1.weight", "head.3.0.bias".
std::vector<std::string> parameter_names(const ModelParams& params);

struct NetworkShape {
    std::vector<std::size_t> trunk_units{64, 64};
    Activation trunk_activation = Activation::relu;
    std::vector<std::size_t> head_hidden{32};
    Activation head_activation = Activation::relu;
};

/// He-scaled normal weights (variance 2 / fan_in), zero biases. The trunk and
/// each head draw from their own derived stream; head k uses stream
/// `first_head_id + k`, so a single-task clone of task j (first_head_id = j)
/// starts from the same head as the multi-task model.
ModelParams init_params(std::size_t input_dim, const NetworkShape& shape, std::span<const TaskSpec> tasks,
                        std::uint64_t seed, std::size_t first_head_id = 0);

struct ForwardResult {
    Matrix shared;
    std::vector<Matrix> outputs;
};

ForwardResult forward(const ModelParams& params, const Matrix& inputs);

struct Batch {
    Matrix inputs;
    std::vector<Matrix> targets;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> rows);

struct Gradients {
    ModelParams params; ///< congruent with the differentiated ModelParams
    /// d(lambda_k L_k)/dW of the last trunk layer, per task. Filled only on request.
    std::vector<Matrix> trunk_last_per_task;
};

struct BackwardResult {
    LossVector losses; ///< unweighted per-task batch means
    Gradients grads;   ///< exact derivatives of sum_k lambda_k L_k, lambda constant
};

/// Forward pass that keeps every activation, so gradients for several
/// weightings can be taken without recomputing it. Holds references to the
/// params and batch, which must outlive it.
class TapedForward {
public:
    TapedForward(const ModelParams& params, const Batch& batch, std::span<const TaskSpec> tasks);

    /// Unweighted per-task batch means.
    const LossVector& losses() const noexcept { return losses_; }
    /// Throws NumericalError naming the layer if any gradient entry is non-finite.
    Gradients gradients(const WeightVector& weights, bool per_task_last_layer = false) const;

private:
    struct LayerCache {
        Matrix pre;
        Matrix out;
    };

    const ModelParams& params_;
    const Batch& batch_;
    std::vector<LayerCache> trunk_;
    std::vector<std::vector<LayerCache>> heads_;
    std::vector<Matrix> loss_grads_;
    LossVector losses_;

    static LayerCache layer_forward(const DenseLayer& layer, const Matrix& in);
    static void activation_backward(Matrix& grad, const LayerCache& cache, Activation act);
};

/// Throws NumericalError naming the layer if any gradient entry is non-finite.
BackwardResult backward(const ModelParams& params, const Batch& batch, std::span<const TaskSpec> tasks,
                        const WeightVector& weights, bool per_task_last_layer = false);

/// |d(lambda_k L_k)/dW_last|_2 for the last trunk layer's weight matrix.
std::vector<double> shared_layer_grad_norms(const ModelParams& params, const Batch& batch,
                                            std::span<const TaskSpec> tasks, const WeightVector& weights);

void sgd_step(ModelParams& params, const Gradients& grads, double lr);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    ModelParams first;
    ModelParams second;

    static AdamMoments like(const ModelParams& params);
};

/// Bias-corrected Adam; `step` is 1-based.
void adam_step(ModelParams& params, const Gradients& grads, AdamMoments& moments, const AdamConfig& config,
               std::uint64_t step);

/// Key/value checkpoint with layer shapes and 17-digit values.
std::string save_params(const ModelParams& params);
ModelParams load_params(std::string_view text);

} // namespace lossbal
