#include "lossbal/network.hpp"

#include <algorithm>
#include <cmath>

#include "lossbal/error.hpp"
#include "lossbal/keyvalue.hpp"
#include "lossbal/rng.hpp"

namespace lossbal {

std::string_view activation_name(Activation a) noexcept {
    switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    for (auto a : {Activation::linear, Activation::relu, Activation::sigmoid, Activation::tanh, Activation::softmax})
        if (activation_name(a) == name) return a;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Activation output_activation(TaskKind kind) noexcept {
    switch (kind) {
    case TaskKind::regression_mse: return Activation::linear;
    case TaskKind::binary_bce: return Activation::sigmoid;
    case TaskKind::multiclass_ce: return Activation::softmax;
    }
    return Activation::linear;
}

std::size_t ModelParams::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : trunk) n += l.weight.size() + l.bias.size();
    for (const auto& h : heads)
        for (const auto& l : h) n += l.weight.size() + l.bias.size();
    return n;
}

namespace {

void check_chain(const std::vector<DenseLayer>& layers, std::size_t input, const std::string& where) {
    std::size_t width = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.inputs() != width || l.outputs() == 0 || l.bias.size() != l.outputs()) {
            throw ConfigError(where + "." + std::to_string(i) + ": layer shape " + std::to_string(l.inputs()) + "x" +
                              std::to_string(l.outputs()) + " does not chain from width " + std::to_string(width));
        }
        width = l.outputs();
    }
}

} // namespace

void ModelParams::validate() const {
    if (trunk.empty()) throw ConfigError("model needs at least one trunk layer");
    if (heads.empty()) throw ConfigError("model needs at least one head");
    check_chain(trunk, trunk.front().inputs(), "trunk");
    for (std::size_t k = 0; k < heads.size(); ++k) {
        if (heads[k].empty()) throw ConfigError("head " + std::to_string(k) + " has no layers");
        check_chain(heads[k], trunk.back().outputs(), "head." + std::to_string(k));
    }
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    for (auto t : parameter_tensors(z)) std::fill(t.begin(), t.end(), 0.0);
    return z;
}

std::vector<std::span<double>> parameter_tensors(ModelParams& params) {
    std::vector<std::span<double>> out;
    auto add = [&](DenseLayer& l) {
        out.emplace_back(l.weight.data());
        out.emplace_back(l.bias);
    };
    for (auto& l : params.trunk) add(l);
    for (auto& h : params.heads)
        for (auto& l : h) add(l);
    return out;
}

std::vector<std::span<const double>> parameter_tensors(const ModelParams& params) {
    std::vector<std::span<const double>> out;
    for (auto t : parameter_tensors(const_cast<ModelParams&>(params))) out.emplace_back(t);
    return out;
}

std::vector<std::string> parameter_names(const ModelParams& params) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < params.trunk.size(); ++i) {
        out.push_back("trunk." + std::to_string(i) + ".weight");
        out.push_back("trunk." + std::to_string(i) + ".bias");
    }
    for (std::size_t k = 0; k < params.heads.size(); ++k) {
        for (std::size_t i = 0; i < params.heads[k].size(); ++i) {
            const auto base = "head." + std::to_string(k) + "." + std::to_string(i);
            out.push_back(base + ".weight");
            out.push_back(base + ".bias");
        }
    }
    return out;
}

namespace {

DenseLayer he_layer(std::size_t in, std::size_t out, Activation act, SplitMix64& rng) {
    DenseLayer l;
    l.weight = Matrix(in, out);
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& v : l.weight.data()) v = stddev * rng.normal();
    l.bias.assign(out, 0.0);
    l.activation = act;
    return l;
}

} // namespace

ModelParams init_params(std::size_t input_dim, const NetworkShape& shape, std::span<const TaskSpec> tasks,
                        std::uint64_t seed, std::size_t first_head_id) {
    if (input_dim == 0) throw ConfigError("input_dim must be positive");
    if (shape.trunk_units.empty()) throw ConfigError("trunk needs at least one layer");
    if (tasks.empty()) throw ConfigError("model needs at least one task");
    ModelParams p;
    SplitMix64 trunk_rng(derive_seed(seed, 1000));
    std::size_t width = input_dim;
    for (auto units : shape.trunk_units) {
        if (units == 0) throw ConfigError("trunk layer width must be positive");
        p.trunk.push_back(he_layer(width, units, shape.trunk_activation, trunk_rng));
        width = units;
    }
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        tasks[k].validate();
        SplitMix64 head_rng(derive_seed(seed, 2000 + first_head_id + k));
        std::vector<DenseLayer> head;
        std::size_t w = width;
        for (auto units : shape.head_hidden) {
            if (units == 0) throw ConfigError("head layer width must be positive");
            head.push_back(he_layer(w, units, shape.head_activation, head_rng));
            w = units;
        }
        head.push_back(he_layer(w, tasks[k].output_dim, output_activation(tasks[k].kind), head_rng));
        p.heads.push_back(std::move(head));
    }
    return p;
}

namespace {

void apply_activation(Matrix& z, Activation act) {
    auto d = z.data();
    switch (act) {
    case Activation::linear: break;
    case Activation::relu:
        for (double& v : d) v = v > 0.0 ? v : 0.0;
        break;
    case Activation::sigmoid:
        for (double& v : d) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        break;
    case Activation::tanh:
        for (double& v : d) v = std::tanh(v);
        break;
    case Activation::softmax:
        for (std::size_t r = 0; r < z.rows(); ++r) {
            auto row = z.row(r);
            const double m = *std::max_element(row.begin(), row.end());
            double s = 0.0;
            for (double& v : row) {
                v = std::exp(v - m);
                s += v;
            }
            for (double& v : row) v /= s;
        }
        break;
    }
}

} // namespace

TapedForward::LayerCache TapedForward::layer_forward(const DenseLayer& l, const Matrix& in) {
    if (in.cols() != l.inputs()) {
        throw ConfigError("forward: input width " + std::to_string(in.cols()) + " does not match layer input " +
                          std::to_string(l.inputs()));
    }
    LayerCache c;
    c.pre = matmul(in, l.weight);
    for (std::size_t r = 0; r < c.pre.rows(); ++r) {
        auto row = c.pre.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += l.bias[j];
    }
    c.out = c.pre;
    apply_activation(c.out, l.activation);
    return c;
}

// Converts d loss / d activation into d loss / d pre-activation, in place.
void TapedForward::activation_backward(Matrix& grad, const LayerCache& c, Activation act) {
    auto g = grad.data();
    const auto pre = c.pre.data();
    const auto out = c.out.data();
    switch (act) {
    case Activation::linear: break;
    case Activation::relu:
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(pre[i] > 0.0)) g[i] = 0.0;
        break;
    case Activation::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= out[i] * (1.0 - out[i]);
        break;
    case Activation::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - out[i] * out[i];
        break;
    case Activation::softmax:
        for (std::size_t r = 0; r < grad.rows(); ++r) {
            auto gr = grad.row(r);
            const auto pr = c.out.row(r);
            double dot = 0.0;
            for (std::size_t j = 0; j < gr.size(); ++j) dot += gr[j] * pr[j];
            for (std::size_t j = 0; j < gr.size(); ++j) gr[j] = pr[j] * (gr[j] - dot);
        }
        break;
    }
}

namespace {

// Given d loss / d pre-activation, fills weight/bias gradients and returns
// d loss / d input (empty when not needed).
Matrix layer_backward(const DenseLayer& l, const Matrix& in, const Matrix& dpre, DenseLayer& grad, bool need_input_grad) {
    grad.weight = matmul_tn(in, dpre);
    grad.bias.assign(l.outputs(), 0.0);
    for (std::size_t r = 0; r < dpre.rows(); ++r) {
        const auto row = dpre.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) grad.bias[j] += row[j];
    }
    grad.activation = l.activation;
    if (!need_input_grad) return {};
    return matmul(dpre, transpose(l.weight));
}

void check_finite(const DenseLayer& g, const std::string& name) {
    if (!all_finite(g.weight.data())) throw NumericalError("non-finite gradient in " + name + ".weight");
    if (!all_finite(g.bias)) throw NumericalError("non-finite gradient in " + name + ".bias");
}

} // namespace

ForwardResult forward(const ModelParams& params, const Matrix& inputs) {
    params.validate();
    if (inputs.cols() != params.input_dim()) {
        throw ConfigError("forward: batch width " + std::to_string(inputs.cols()) + " but model expects " +
                          std::to_string(params.input_dim()));
    }
    ForwardResult r;
    Matrix x = inputs;
    for (const auto& l : params.trunk) {
        Matrix z = matmul(x, l.weight);
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += l.bias[j];
        apply_activation(z, l.activation);
        x = std::move(z);
    }
    r.shared = std::move(x);
    for (const auto& head : params.heads) {
        Matrix h = r.shared;
        for (const auto& l : head) {
            Matrix z = matmul(h, l.weight);
            for (std::size_t i = 0; i < z.rows(); ++i)
                for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += l.bias[j];
            apply_activation(z, l.activation);
            h = std::move(z);
        }
        r.outputs.push_back(std::move(h));
    }
    return r;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> rows) {
    Batch b;
    b.inputs = gather_rows(data.inputs, rows);
    for (const auto& t : data.targets) b.targets.push_back(gather_rows(t, rows));
    return b;
}

TapedForward::TapedForward(const ModelParams& params, const Batch& batch, std::span<const TaskSpec> tasks)
    : params_(params), batch_(batch) {
    params.validate();
    const std::size_t k = params.tasks();
    if (tasks.size() != k || batch.targets.size() != k) {
        throw ConfigError("model has " + std::to_string(k) + " heads but got " + std::to_string(tasks.size()) +
                          " task specs and " + std::to_string(batch.targets.size()) + " target blocks");
    }
    if (batch.inputs.cols() != params.input_dim()) {
        throw ConfigError("forward: batch width " + std::to_string(batch.inputs.cols()) + " but model expects " +
                          std::to_string(params.input_dim()));
    }
    const Matrix* x = &batch.inputs;
    trunk_.reserve(params.trunk.size());
    for (const auto& l : params.trunk) {
        trunk_.push_back(layer_forward(l, *x));
        x = &trunk_.back().out;
    }
    const Matrix& shared = trunk_.back().out;
    losses_.values.resize(k);
    for (std::size_t t = 0; t < k; ++t) {
        const auto& head = params.heads[t];
        std::vector<LayerCache> caches;
        caches.reserve(head.size());
        const Matrix* h = &shared;
        for (const auto& l : head) {
            caches.push_back(layer_forward(l, *h));
            h = &caches.back().out;
        }
        auto lg = loss_and_grad(tasks[t].kind, caches.back().out, batch.targets[t], tasks[t].loss_multiplier());
        losses_.values[t] = lg.loss;
        loss_grads_.push_back(std::move(lg.grad));
        heads_.push_back(std::move(caches));
    }
}

Gradients TapedForward::gradients(const WeightVector& weights, bool per_task_last_layer) const {
    const std::size_t k = params_.tasks();
    if (weights.size() != k)
        throw ConfigError("backward: " + std::to_string(weights.size()) + " weights for " + std::to_string(k) + " tasks");
    for (std::size_t i = 0; i < k; ++i) {
        if (!std::isfinite(weights[i]) || weights[i] < 0.0)
            throw ConfigError("backward: weight for task " + std::to_string(i) + " must be finite and >= 0");
    }
    const Matrix& shared = trunk_.back().out;

    Gradients result;
    result.params.trunk.resize(params_.trunk.size());
    result.params.heads.resize(k);

    std::vector<Matrix> shared_grads;
    shared_grads.reserve(k);
    for (std::size_t t = 0; t < k; ++t) {
        const auto& head = params_.heads[t];
        const auto& caches = heads_[t];
        Matrix grad = loss_grads_[t];
        for (double& v : grad.data()) v *= weights[t];

        auto& head_grads = result.params.heads[t];
        head_grads.resize(head.size());
        for (std::size_t i = head.size(); i-- > 0;) {
            activation_backward(grad, caches[i], head[i].activation);
            const Matrix& in = i == 0 ? shared : caches[i - 1].out;
            grad = layer_backward(head[i], in, grad, head_grads[i], true);
            check_finite(head_grads[i], "head." + std::to_string(t) + "." + std::to_string(i));
        }
        shared_grads.push_back(std::move(grad));
    }

    Matrix grad = shared_grads.front();
    for (std::size_t t = 1; t < k; ++t) {
        auto g = grad.data();
        const auto s = shared_grads[t].data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i];
    }

    const std::size_t last = params_.trunk.size() - 1;
    const Matrix& last_in = last == 0 ? batch_.inputs : trunk_[last - 1].out;
    if (per_task_last_layer) {
        for (auto& sg : shared_grads) {
            activation_backward(sg, trunk_[last], params_.trunk[last].activation);
            result.trunk_last_per_task.push_back(matmul_tn(last_in, sg));
        }
    }

    for (std::size_t i = params_.trunk.size(); i-- > 0;) {
        activation_backward(grad, trunk_[i], params_.trunk[i].activation);
        const Matrix& in = i == 0 ? batch_.inputs : trunk_[i - 1].out;
        grad = layer_backward(params_.trunk[i], in, grad, result.params.trunk[i], i > 0);
        check_finite(result.params.trunk[i], "trunk." + std::to_string(i));
    }
    return result;
}

BackwardResult backward(const ModelParams& params, const Batch& batch, std::span<const TaskSpec> tasks,
                        const WeightVector& weights, bool per_task_last_layer) {
    TapedForward tape(params, batch, tasks);
    BackwardResult r;
    r.grads = tape.gradients(weights, per_task_last_layer);
    r.losses = tape.losses();
    return r;
}

std::vector<double> shared_layer_grad_norms(const ModelParams& params, const Batch& batch,
                                            std::span<const TaskSpec> tasks, const WeightVector& weights) {
    const auto r = backward(params, batch, tasks, weights, true);
    std::vector<double> norms;
    norms.reserve(r.grads.trunk_last_per_task.size());
    for (const auto& g : r.grads.trunk_last_per_task) norms.push_back(frobenius_norm(g));
    return norms;
}

namespace {

void require_congruent(const std::vector<std::span<double>>& p, const std::vector<std::span<const double>>& g) {
    if (p.size() != g.size()) throw ConfigError("optimizer: gradient structure does not match parameters");
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i].size() != g[i].size()) throw ConfigError("optimizer: gradient shape does not match parameters");
}

} // namespace

void sgd_step(ModelParams& params, const Gradients& grads, double lr) {
    auto p = parameter_tensors(params);
    const auto g = parameter_tensors(grads.params);
    require_congruent(p, g);
    for (std::size_t t = 0; t < p.size(); ++t)
        for (std::size_t i = 0; i < p[t].size(); ++i) p[t][i] -= lr * g[t][i];
}

AdamMoments AdamMoments::like(const ModelParams& params) {
    return AdamMoments{params.zeros_like(), params.zeros_like()};
}

void adam_step(ModelParams& params, const Gradients& grads, AdamMoments& moments, const AdamConfig& config,
               std::uint64_t step) {
    if (step == 0) throw ConfigError("adam: step counter is 1-based");
    auto p = parameter_tensors(params);
    const auto g = parameter_tensors(grads.params);
    auto m = parameter_tensors(moments.first);
    auto v = parameter_tensors(moments.second);
    require_congruent(p, g);
    require_congruent(m, g);
    require_congruent(v, g);
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    for (std::size_t t = 0; t < p.size(); ++t) {
        for (std::size_t i = 0; i < p[t].size(); ++i) {
            const double gi = g[t][i];
            m[t][i] = config.beta1 * m[t][i] + (1.0 - config.beta1) * gi;
            v[t][i] = config.beta2 * v[t][i] + (1.0 - config.beta2) * gi * gi;
            const double mhat = m[t][i] / c1;
            const double vhat = v[t][i] / c2;
            p[t][i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

namespace {

void write_layer(KeyValueDoc& doc, const std::string& name, const DenseLayer& l) {
    doc.add(name + ".shape", std::to_string(l.inputs()) + " " + std::to_string(l.outputs()));
    doc.add(name + ".activation", std::string(activation_name(l.activation)));
    doc.add(name + ".weight", l.weight.data());
    doc.add(name + ".bias", l.bias);
}

DenseLayer read_layer(const KeyValueDoc& doc, const std::string& name) {
    const auto shape = doc.numbers(name + ".shape");
    if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1) throw ConfigError(name + ": bad shape");
    const auto in = static_cast<std::size_t>(shape[0]);
    const auto out = static_cast<std::size_t>(shape[1]);
    DenseLayer l;
    l.activation = parse_activation(doc.at(name + ".activation"));
    l.weight = Matrix(in, out, doc.numbers(name + ".weight"));
    l.bias = doc.numbers(name + ".bias");
    if (l.bias.size() != out) throw ConfigError(name + ": bias size does not match shape");
    return l;
}

} // namespace

std::string save_params(const ModelParams& params) {
    KeyValueDoc doc;
    doc.add("format", "lossbal-params-1");
    doc.add("trunk_layers", std::to_string(params.trunk.size()));
    doc.add("heads", std::to_string(params.heads.size()));
    for (std::size_t i = 0; i < params.trunk.size(); ++i) write_layer(doc, "trunk." + std::to_string(i), params.trunk[i]);
    for (std::size_t k = 0; k < params.heads.size(); ++k) {
        doc.add("head." + std::to_string(k) + ".layers", std::to_string(params.heads[k].size()));
        for (std::size_t i = 0; i < params.heads[k].size(); ++i)
            write_layer(doc, "head." + std::to_string(k) + "." + std::to_string(i), params.heads[k][i]);
    }
    return doc.str();
}

ModelParams load_params(std::string_view text) {
    const auto doc = KeyValueDoc::parse(text);
    if (doc.at("format") != "lossbal-params-1") throw ConfigError("checkpoint: unsupported format");
    ModelParams p;
    const auto trunk_layers = doc.integer("trunk_layers");
    const auto heads = doc.integer("heads");
    if (trunk_layers < 1 || heads < 1) throw ConfigError("checkpoint: empty model");
    for (std::int64_t i = 0; i < trunk_layers; ++i) p.trunk.push_back(read_layer(doc, "trunk." + std::to_string(i)));
    for (std::int64_t k = 0; k < heads; ++k) {
        const auto base = "head." + std::to_string(k);
        const auto layers = doc.integer(base + ".layers");
        if (layers < 1) throw ConfigError("checkpoint: head without layers");
        std::vector<DenseLayer> head;
        for (std::int64_t i = 0; i < layers; ++i) head.push_back(read_layer(doc, base + "." + std::to_string(i)));
        p.heads.push_back(std::move(head));
    }
    p.validate();
    return p;
}

} // namespace lossbal
