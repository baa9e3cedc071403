#include "lossbal/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lossbal/error.hpp"
#include "lossbal/keyvalue.hpp"
#include "lossbal/rng.hpp"

namespace lossbal {

std::string_view task_kind_name(TaskKind kind) noexcept {
    switch (kind) {
    case TaskKind::regression_mse: return "regression-mse";
    case TaskKind::binary_bce: return "binary-bce";
    case TaskKind::multiclass_ce: return "multiclass-ce";
    }
    return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
    if (name == "regression-mse") return TaskKind::regression_mse;
    if (name == "binary-bce") return TaskKind::binary_bce;
    if (name == "multiclass-ce") return TaskKind::multiclass_ce;
    throw ConfigError("unknown task kind '" + std::string(name) +
                      "' (expected regression-mse, binary-bce, multiclass-ce)");
}

void TaskSpec::validate() const {
    if (!(loss_scale > 0.0) || !std::isfinite(loss_scale))
        throw ConfigError("task '" + name + "': loss_scale must be positive");
    if (output_dim == 0) throw ConfigError("task '" + name + "': output_dim must be positive");
    if (kind == TaskKind::multiclass_ce && output_dim < 2)
        throw ConfigError("task '" + name + "': multiclass tasks need output_dim >= 2");
    if (name.empty() || name.find_first_of(" ,\t\n") != std::string::npos)
        throw ConfigError("task name must be non-empty without spaces or commas");
}

Dataset Dataset::single_task(std::size_t task) const {
    if (task >= tasks()) throw ConfigError("task index " + std::to_string(task) + " out of range");
    Dataset out;
    out.inputs = inputs;
    out.targets = {targets[task]};
    out.specs = {specs[task]};
    out.train = train;
    out.test = test;
    out.seed = seed;
    out.relatedness = relatedness;
    return out;
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = stddev * rng.normal();
    return m;
}

} // namespace

Dataset generate_mtl(std::uint64_t seed, std::size_t input_dim, std::size_t n_samples,
                     std::span<const TaskSpec> specs, double relatedness, const GeneratorOptions& options) {
    const std::size_t k = specs.size();
    if (k == 0) throw ConfigError("generate_mtl: at least one task is required");
    if (input_dim < 2) throw ConfigError("generate_mtl: input_dim must be >= 2");
    if (n_samples < 10 * k) throw ConfigError("generate_mtl: n_samples must be >= 10 * tasks");
    if (!(relatedness >= 0.0 && relatedness <= 1.0)) throw ConfigError("generate_mtl: relatedness must lie in [0, 1]");
    if (options.latent_dim == 0) throw ConfigError("generate_mtl: latent_dim must be positive");
    if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0))
        throw ConfigError("generate_mtl: train_fraction must lie in (0, 1)");
    for (const auto& s : specs) s.validate();

    Dataset d;
    d.seed = seed;
    d.relatedness = relatedness;
    d.specs.assign(specs.begin(), specs.end());

    const std::size_t latent = options.latent_dim;
    std::size_t max_out = 0;
    for (const auto& s : specs) max_out = std::max(max_out, s.output_dim);

    d.inputs = gaussian_matrix(n_samples, input_dim, 1.0, derive_seed(seed, 1));
    // Rows of B scaled so each latent pre-activation has unit variance.
    const Matrix basis = gaussian_matrix(input_dim, latent, 1.0 / std::sqrt(static_cast<double>(input_dim)),
                                         derive_seed(seed, 2));
    Matrix hidden = matmul(d.inputs, basis);
    for (double& v : hidden.data()) v = std::tanh(v);

    const double w_std = 1.0 / std::sqrt(static_cast<double>(latent));
    const Matrix common_map = gaussian_matrix(latent, max_out, w_std, derive_seed(seed, 3));
    const Matrix common_noise = gaussian_matrix(n_samples, max_out, 1.0, derive_seed(seed, 4));
    const double shared = std::sqrt(relatedness);
    const double own = std::sqrt(1.0 - relatedness);

    for (std::size_t t = 0; t < k; ++t) {
        const auto& spec = specs[t];
        const std::size_t out_dim = spec.output_dim;
        const Matrix own_map = gaussian_matrix(latent, out_dim, w_std, derive_seed(seed, 100 + t));
        const Matrix own_noise = gaussian_matrix(n_samples, out_dim, 1.0, derive_seed(seed, 200 + t));

        Matrix map(latent, out_dim);
        for (std::size_t i = 0; i < latent; ++i)
            for (std::size_t j = 0; j < out_dim; ++j) map(i, j) = shared * common_map(i, j) + own * own_map(i, j);
        Matrix pre = matmul(hidden, map);

        double mean = 0.0;
        for (double v : pre.data()) mean += v;
        mean /= static_cast<double>(pre.size());
        double var = 0.0;
        for (double v : pre.data()) var += (v - mean) * (v - mean);
        const double sigma = options.noise_ratio * std::sqrt(var / static_cast<double>(pre.size()));
        for (std::size_t i = 0; i < n_samples; ++i)
            for (std::size_t j = 0; j < out_dim; ++j)
                pre(i, j) += sigma * (shared * common_noise(i, j) + own * own_noise(i, j));

        Matrix target(n_samples, out_dim);
        switch (spec.kind) {
        case TaskKind::regression_mse:
            for (std::size_t i = 0; i < target.size(); ++i) target.data()[i] = pre.data()[i] * spec.loss_scale;
            break;
        case TaskKind::binary_bce:
            for (std::size_t i = 0; i < target.size(); ++i) target.data()[i] = pre.data()[i] > 0.0 ? 1.0 : 0.0;
            break;
        case TaskKind::multiclass_ce:
            for (std::size_t i = 0; i < n_samples; ++i) {
                const auto row = pre.row(i);
                const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
                target(i, best) = 1.0;
            }
            break;
        }
        d.targets.push_back(std::move(target));
    }

    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 shuffle(derive_seed(seed, 5));
    for (std::size_t i = n_samples; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(n_samples)));
    d.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    d.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(d.train.begin(), d.train.end());
    std::sort(d.test.begin(), d.test.end());
    return d;
}

namespace {

constexpr double kProbClamp = 1e-12;

void require_same_shape(const Matrix& p, const Matrix& y) {
    if (p.rows() != y.rows() || p.cols() != y.cols()) {
        throw ConfigError("loss: predictions " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                          " vs targets " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
    }
    if (p.empty()) throw ConfigError("loss: empty batch");
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

} // namespace

LossAndGrad loss_and_grad(TaskKind kind, const Matrix& predictions, const Matrix& targets, double multiplier) {
    require_same_shape(predictions, targets);
    LossAndGrad out;
    out.grad = Matrix(predictions.rows(), predictions.cols());
    const auto p = predictions.data();
    const auto y = targets.data();
    auto g = out.grad.data();
    switch (kind) {
    case TaskKind::regression_mse: {
        const double inv = 1.0 / static_cast<double>(p.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double e = p[i] - y[i];
            sum += e * e;
            g[i] = multiplier * (2.0 * e * inv);
        }
        out.loss = multiplier * (sum * inv);
        break;
    }
    case TaskKind::binary_bce: {
        const double inv = 1.0 / static_cast<double>(p.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw ConfigError("bce: prediction outside [0, 1]");
            const double q = clamp_prob(p[i]);
            sum -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
            g[i] = multiplier * ((-y[i] / q + (1.0 - y[i]) / (1.0 - q)) * inv);
        }
        out.loss = multiplier * (sum * inv);
        break;
    }
    case TaskKind::multiclass_ce: {
        const double inv = 1.0 / static_cast<double>(predictions.rows());
        double sum = 0.0;
        for (std::size_t r = 0; r < predictions.rows(); ++r) {
            double row_sum = 0.0;
            for (std::size_t c = 0; c < predictions.cols(); ++c) {
                const double pc = predictions(r, c);
                if (!(pc >= 0.0)) throw ConfigError("ce: negative or NaN probability");
                row_sum += pc;
            }
            if (std::abs(row_sum - 1.0) > 1e-6) throw ConfigError("ce: prediction row is not a probability simplex");
            for (std::size_t c = 0; c < predictions.cols(); ++c) {
                const double q = clamp_prob(predictions(r, c));
                const double yc = targets(r, c);
                sum -= yc * std::log(q);
                out.grad(r, c) = multiplier * (-(yc / q) * inv);
            }
        }
        out.loss = multiplier * (sum * inv);
        break;
    }
    }
    return out;
}

Scenario scenario_by_name(std::string_view name) {
    Scenario s;
    s.name = std::string(name);
    if (name == "celeb-mini") {
        for (int i = 0; i < 8; ++i)
            s.specs.push_back({"attr" + std::to_string(i), TaskKind::binary_bce, 1, i == 7 ? 50.0 : 1.0});
        // enough data that the shared trunk, not memorization, limits the
        // unscaled tasks; with fewer samples every method overfits alike
        s.n_samples = 10000;
        return s;
    }
    if (name == "va-mini") {
        s.specs = {
            {"emotion", TaskKind::multiclass_ce, 8, 1.0},
            {"valence", TaskKind::regression_mse, 1, 1.0},
            {"arousal", TaskKind::regression_mse, 1, 20.0},
        };
        return s;
    }
    throw ConfigError("unknown scenario '" + std::string(name) + "' (expected celeb-mini, va-mini)");
}

std::string export_dataset(const Dataset& data) {
    KeyValueDoc header;
    header.add("format", "lossbal-dataset-1");
    header.add("seed", std::to_string(data.seed));
    header.add("relatedness", data.relatedness);
    header.add("samples", std::to_string(data.samples()));
    header.add("input_dim", std::to_string(data.inputs.cols()));
    for (const auto& s : data.specs) {
        header.add("task", s.name + " " + std::string(task_kind_name(s.kind)) + " " + std::to_string(s.output_dim) +
                               " " + format_double(s.loss_scale));
    }
    std::string out;
    for (const auto& [k, v] : header.entries()) out += "# " + k + " = " + v + "\n";

    out += "split";
    for (std::size_t j = 0; j < data.inputs.cols(); ++j) out += ",x" + std::to_string(j);
    for (std::size_t t = 0; t < data.tasks(); ++t)
        for (std::size_t j = 0; j < data.specs[t].output_dim; ++j) out += "," + data.specs[t].name + "." + std::to_string(j);
    out += '\n';

    std::vector<char> is_train(data.samples(), 0);
    for (auto i : data.train) is_train[i] = 1;
    for (std::size_t i = 0; i < data.samples(); ++i) {
        out += is_train[i] ? "train" : "test";
        for (double v : data.inputs.row(i)) out += "," + format_double(v);
        for (const auto& block : data.targets)
            for (double v : block.row(i)) out += "," + format_double(v);
        out += '\n';
    }
    return out;
}

Dataset import_dataset(std::string_view text) {
    const auto lines = split(text, '\n');
    std::string header_text;
    std::size_t line = 0;
    while (line < lines.size() && !lines[line].empty() && lines[line][0] == '#') {
        header_text += lines[line].substr(1) + "\n";
        ++line;
    }
    const auto header = KeyValueDoc::parse(header_text);
    if (header.at("format") != "lossbal-dataset-1") throw ConfigError("dataset: unsupported format");

    Dataset d;
    const auto seed = header.integer("seed");
    d.seed = static_cast<std::uint64_t>(seed);
    d.relatedness = header.number("relatedness");
    const auto samples = header.integer("samples");
    const auto input_dim = header.integer("input_dim");
    if (samples <= 0 || input_dim <= 0) throw ConfigError("dataset: bad dimensions");
    for (const auto& t : header.all("task")) {
        std::vector<std::string> parts;
        for (auto& p : split(t, ' '))
            if (!p.empty()) parts.push_back(p);
        if (parts.size() != 4) throw ConfigError("dataset: malformed task line '" + t + "'");
        TaskSpec spec{parts[0], parse_task_kind(parts[1]), static_cast<std::size_t>(parse_integer(parts[2])),
                      parse_double(parts[3])};
        spec.validate();
        d.specs.push_back(std::move(spec));
    }
    if (d.specs.empty()) throw ConfigError("dataset: no tasks");

    const auto n = static_cast<std::size_t>(samples);
    const auto dim = static_cast<std::size_t>(input_dim);
    d.inputs = Matrix(n, dim);
    for (const auto& s : d.specs) d.targets.emplace_back(n, s.output_dim);

    if (line >= lines.size()) throw ConfigError("dataset: missing column header");
    ++line;
    std::size_t row = 0;
    for (; line < lines.size(); ++line) {
        if (trim(lines[line]).empty()) continue;
        if (row >= n) throw ConfigError("dataset: more rows than declared");
        const auto cells = split(lines[line], ',');
        std::size_t expected = 1 + dim;
        for (const auto& s : d.specs) expected += s.output_dim;
        if (cells.size() != expected) throw ConfigError("dataset: row " + std::to_string(row) + " has wrong width");
        if (cells[0] == "train") {
            d.train.push_back(row);
        } else if (cells[0] == "test") {
            d.test.push_back(row);
        } else {
            throw ConfigError("dataset: bad split label '" + cells[0] + "'");
        }
        std::size_t c = 1;
        for (std::size_t j = 0; j < dim; ++j) d.inputs(row, j) = parse_double(cells[c++]);
        for (auto& block : d.targets)
            for (std::size_t j = 0; j < block.cols(); ++j) block(row, j) = parse_double(cells[c++]);
        ++row;
    }
    if (row != n) throw ConfigError("dataset: expected " + std::to_string(n) + " rows, found " + std::to_string(row));
    return d;
}

} // namespace lossbal
