#include "lossbal/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "lossbal/error.hpp"
#include "lossbal/keyvalue.hpp"
#include "lossbal/rng.hpp"

namespace lossbal {

namespace {

constexpr std::string_view kConfigKeys[] = {
    "scenario", "task", "input_dim", "samples", "relatedness", "balancer", "beta", "temperature",
    "alpha", "uw_lr", "gradnorm_lr", "dwema_scaling", "trunk", "trunk_activation", "head_hidden",
    "head_activation", "optimizer", "lr", "iterations", "batch_size", "seed", "log_every", "out_dir",
};

std::size_t read_count(const KeyValueDoc& doc, std::string_view key) {
    const auto v = doc.integer(key);
    if (v < 0) throw ConfigError("key '" + std::string(key) + "' must be non-negative");
    return static_cast<std::size_t>(v);
}

std::vector<std::size_t> read_units(const KeyValueDoc& doc, std::string_view key) {
    std::vector<std::size_t> out;
    for (double v : doc.numbers(key)) {
        if (v < 1 || v != std::floor(v)) throw ConfigError("key '" + std::string(key) + "' needs positive integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::string join_units(const std::vector<std::size_t>& units) {
    std::string out;
    for (std::size_t i = 0; i < units.size(); ++i) out += (i ? "," : "") + std::to_string(units[i]);
    return out;
}

TaskSpec parse_task_line(const std::string& line) {
    std::vector<std::string> parts;
    for (auto& p : split(line, ' '))
        if (!p.empty()) parts.push_back(p);
    if (parts.size() != 4) throw ConfigError("task line must be '<name> <kind> <output_dim> <loss_scale>': " + line);
    const auto dim = parse_integer(parts[2]);
    if (dim < 1) throw ConfigError("task output_dim must be positive: " + line);
    TaskSpec spec{parts[0], parse_task_kind(parts[1]), static_cast<std::size_t>(dim), parse_double(parts[3])};
    spec.validate();
    return spec;
}

} // namespace

ExperimentConfig ExperimentConfig::from_scenario(std::string_view name) {
    const auto s = scenario_by_name(name);
    ExperimentConfig c;
    c.scenario = s.name;
    c.tasks = s.specs;
    c.input_dim = s.input_dim;
    c.samples = s.n_samples;
    c.relatedness = s.relatedness;
    return c;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
    const auto doc = KeyValueDoc::parse(text);
    doc.reject_unknown(kConfigKeys);
    ExperimentConfig c;
    c.tasks.clear();
    if (auto s = doc.find("scenario")) {
        if (*s == "custom") {
            c.scenario = "custom";
        } else {
            c = from_scenario(*s);
        }
    }
    if (const auto lines = doc.all("task"); !lines.empty()) {
        if (c.scenario != "custom" && doc.contains("scenario"))
            throw ConfigError("config: task lines require 'scenario = custom' or no scenario key");
        c.scenario = "custom";
        c.tasks.clear();
        for (const auto& l : lines) c.tasks.push_back(parse_task_line(l));
    }
    if (doc.contains("input_dim")) c.input_dim = read_count(doc, "input_dim");
    if (doc.contains("samples")) c.samples = read_count(doc, "samples");
    if (doc.contains("relatedness")) c.relatedness = doc.number("relatedness");
    if (doc.contains("balancer")) c.balancer.method = parse_method(doc.at("balancer"));
    if (doc.contains("beta")) c.balancer.beta = doc.number("beta");
    if (doc.contains("temperature")) c.balancer.temperature = doc.number("temperature");
    if (doc.contains("alpha")) c.balancer.alpha = doc.number("alpha");
    if (doc.contains("uw_lr")) c.balancer.uw_learning_rate = doc.number("uw_lr");
    if (doc.contains("gradnorm_lr")) c.balancer.gradnorm_learning_rate = doc.number("gradnorm_lr");
    if (auto s = doc.find("dwema_scaling")) {
        if (*s == "divide") {
            c.balancer.dwema_scaling = DwemaScaling::divide;
        } else if (*s == "multiply") {
            c.balancer.dwema_scaling = DwemaScaling::multiply;
        } else {
            throw ConfigError("dwema_scaling must be divide or multiply");
        }
    }
    if (doc.contains("trunk")) c.network.trunk_units = read_units(doc, "trunk");
    if (doc.contains("trunk_activation")) c.network.trunk_activation = parse_activation(doc.at("trunk_activation"));
    if (doc.contains("head_hidden")) c.network.head_hidden = read_units(doc, "head_hidden");
    if (doc.contains("head_activation")) c.network.head_activation = parse_activation(doc.at("head_activation"));
    if (auto s = doc.find("optimizer")) {
        if (*s == "adam") {
            c.optimizer = OptimizerKind::adam;
        } else if (*s == "sgd") {
            c.optimizer = OptimizerKind::sgd;
        } else {
            throw ConfigError("optimizer must be adam or sgd");
        }
    }
    if (doc.contains("lr")) c.lr = doc.number("lr");
    if (doc.contains("iterations")) c.iterations = read_count(doc, "iterations");
    if (doc.contains("batch_size")) c.batch_size = read_count(doc, "batch_size");
    if (doc.contains("seed")) c.seed = static_cast<std::uint64_t>(doc.integer("seed"));
    if (doc.contains("log_every")) c.log_every = read_count(doc, "log_every");
    if (auto s = doc.find("out_dir")) c.out_dir = *s;
    c.validate();
    return c;
}

std::string ExperimentConfig::echo() const {
    KeyValueDoc doc;
    doc.add("scenario", scenario);
    for (const auto& t : tasks)
        doc.add("task", t.name + " " + std::string(task_kind_name(t.kind)) + " " + std::to_string(t.output_dim) + " " +
                            format_double(t.loss_scale));
    doc.add("input_dim", std::to_string(input_dim));
    doc.add("samples", std::to_string(samples));
    doc.add("relatedness", relatedness);
    doc.add("balancer", std::string(method_name(balancer.method)));
    doc.add("beta", balancer.beta);
    doc.add("temperature", balancer.temperature);
    doc.add("alpha", balancer.alpha);
    doc.add("uw_lr", balancer.uw_learning_rate);
    doc.add("gradnorm_lr", balancer.gradnorm_learning_rate);
    doc.add("dwema_scaling", balancer.dwema_scaling == DwemaScaling::divide ? "divide" : "multiply");
    doc.add("trunk", join_units(network.trunk_units));
    doc.add("trunk_activation", std::string(activation_name(network.trunk_activation)));
    doc.add("head_hidden", join_units(network.head_hidden));
    doc.add("head_activation", std::string(activation_name(network.head_activation)));
    doc.add("optimizer", optimizer == OptimizerKind::adam ? "adam" : "sgd");
    doc.add("lr", lr);
    doc.add("iterations", std::to_string(iterations));
    doc.add("batch_size", std::to_string(batch_size));
    doc.add("seed", std::to_string(seed));
    doc.add("log_every", std::to_string(log_every));
    if (!out_dir.empty()) doc.add("out_dir", out_dir);
    return doc.str();
}

void ExperimentConfig::validate() const {
    if (tasks.empty()) throw ConfigError("config: no tasks (set scenario or task lines)");
    for (const auto& t : tasks) t.validate();
    for (std::size_t i = 0; i < tasks.size(); ++i)
        for (std::size_t j = i + 1; j < tasks.size(); ++j)
            if (tasks[i].name == tasks[j].name) throw ConfigError("config: duplicate task name '" + tasks[i].name + "'");
    if (input_dim < 2) throw ConfigError("config: input_dim must be >= 2");
    if (samples < 10 * tasks.size()) throw ConfigError("config: samples must be >= 10 * tasks");
    if (!(relatedness >= 0.0 && relatedness <= 1.0)) throw ConfigError("config: relatedness must lie in [0, 1]");
    balancer.validate();
    if (network.trunk_units.empty()) throw ConfigError("config: trunk needs at least one layer");
    if (network.trunk_activation == Activation::softmax || network.head_activation == Activation::softmax)
        throw ConfigError("config: softmax is reserved for multiclass outputs");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("config: lr must be positive");
    if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
    if (log_every == 0) throw ConfigError("config: log_every must be positive");
}

CompositeConfig composite_for(std::span<const TaskSpec> tasks) {
    CompositeConfig c;
    for (auto kind : {TaskKind::binary_bce, TaskKind::multiclass_ce, TaskKind::regression_mse}) {
        const bool present = std::any_of(tasks.begin(), tasks.end(), [&](const TaskSpec& t) { return t.kind == kind; });
        if (!present) continue;
        const char* group = kind == TaskKind::binary_bce ? "binary" : kind == TaskKind::multiclass_ce ? "multiclass" : "regression";
        c.groups.push_back({group, 0});
    }
    return c;
}

namespace {

const char* group_of(TaskKind kind) {
    switch (kind) {
    case TaskKind::binary_bce: return "binary";
    case TaskKind::multiclass_ce: return "multiclass";
    case TaskKind::regression_mse: return "regression";
    }
    return "";
}

void evaluate(RunResult& result, const ModelParams& params, const Dataset& data) {
    const Matrix test_inputs = gather_rows(data.inputs, data.test);
    const auto fwd = forward(params, test_inputs);
    std::vector<ScorePart> parts;
    for (std::size_t k = 0; k < data.tasks(); ++k) {
        const auto& spec = data.specs[k];
        const Matrix targets = gather_rows(data.targets[k], data.test);
        result.task_names.push_back(spec.name);
        result.test_losses.push_back(loss_and_grad(spec.kind, fwd.outputs[k], targets, spec.loss_multiplier()).loss);
        result.test_metrics.push_back(task_metric(spec.kind, fwd.outputs[k], targets));
        parts.push_back({group_of(spec.kind), result.test_metrics.back()});
    }
    result.composite = composite_score(parts, composite_for(data.specs));
}

} // namespace

RunResult train_on(const ExperimentConfig& config, const Dataset& data, std::size_t first_head_id) {
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    if (data.train.empty() || data.test.empty()) throw ConfigError("dataset needs non-empty train and test splits");
    const std::size_t k = data.tasks();

    RunResult result;
    result.config = config;
    ModelParams params = init_params(data.inputs.cols(), config.network, data.specs, config.seed, first_head_id);
    auto balancer = make_balancer(config.balancer, k);
    AdamMoments moments = AdamMoments::like(params);
    const AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};
    SplitMix64 batch_rng(derive_seed(config.seed, 6));
    LossHistory rate_history;
    std::vector<std::size_t> rows(config.batch_size);

    for (std::size_t t = 0; t < config.iterations; ++t) {
        for (auto& r : rows) r = data.train[batch_rng.below(data.train.size())];
        const Batch batch = make_batch(data, rows);
        WeightVector weights;
        LossVector losses;
        try {
            const TapedForward tape(params, batch, data.specs);
            losses = tape.losses();
            losses.iteration = t;
            if (t == 0) result.first_losses = losses.values;
            validate_losses(losses, k);
            std::vector<double> norms;
            if (balancer->needs_grad_norms()) {
                const auto probe = tape.gradients(balancer->current_weights(), true);
                for (const auto& g : probe.trunk_last_per_task) norms.push_back(frobenius_norm(g));
            }
            weights = balancer->update(losses, norms);
            const double total = combine(weights, losses);
            if (!std::isfinite(total) || !all_finite(weights.values))
                throw NumericalError("non-finite weighted total loss");
            const auto grads = tape.gradients(weights);
            if (config.optimizer == OptimizerKind::adam) {
                adam_step(params, grads, moments, adam, t + 1);
            } else {
                sgd_step(params, grads, config.lr);
            }
            if ((t + 1) % config.log_every == 0) {
                TraceRow row;
                row.iteration = t;
                row.losses = losses.values;
                row.weights = weights.values;
                row.rates = training_rates(rate_history, k);
                row.rate_std = training_rate_std(row.rates);
                row.weighted_total = total;
                result.trace.append(std::move(row));
            }
        } catch (const NumericalError& e) {
            throw NumericalAbort(t, balancer->snapshot(),
                                 "numerical abort at iteration " + std::to_string(t) + ": " + e.what());
        }
        rate_history.push(losses.values);
    }

    evaluate(result, params, data);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

RunResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto data = generate_mtl(config.seed, config.input_dim, config.samples, config.tasks, config.relatedness);
    return train_on(config, data);
}

RunResult run_single_task(const ExperimentConfig& config, std::size_t task) {
    config.validate();
    if (task >= config.tasks.size())
        throw ConfigError("task index " + std::to_string(task) + " out of range for " +
                          std::to_string(config.tasks.size()) + " tasks");
    const auto data = generate_mtl(config.seed, config.input_dim, config.samples, config.tasks, config.relatedness);
    ExperimentConfig single = config;
    single.balancer.method = Method::baseline;
    auto r = train_on(single, data.single_task(task), task);
    r.config = config;
    return r;
}

std::string RunResult::to_json() const {
    nlohmann::ordered_json j;
    j["scenario"] = config.scenario;
    j["balancer"] = std::string(method_name(config.balancer.method));
    j["seed"] = config.seed;
    j["iterations"] = config.iterations;
    j["composite"] = composite;
    auto tasks = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < task_names.size(); ++k) {
        tasks.push_back({{"name", task_names[k]}, {"test_loss", test_losses[k]}, {"metric", test_metrics[k]}});
    }
    j["tasks"] = tasks;
    j["trace_rows"] = trace.size();
    j["coefficient_spikiness"] = coefficient_spikiness(trace);
    return j.dump(2) + "\n";
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
}

} // namespace

void write_run_outputs(const RunResult& result, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_file(std::filesystem::path(dir) / "trace.csv", result.trace.to_csv());
    write_file(std::filesystem::path(dir) / "result.json", result.to_json());
    write_file(std::filesystem::path(dir) / "config.echo", result.config.echo());
}

// ---------------------------------------------------------------------------

namespace {

void run_parallel(std::vector<std::function<void()>>& jobs, std::size_t threads) {
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads = std::min(threads, jobs.size());
    if (threads <= 1) {
        for (auto& j : jobs) j();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) {
        pool.emplace_back([&] {
            for (std::size_t j = next++; j < jobs.size(); j = next++) jobs[j]();
        });
    }
    for (auto& t : pool) t.join();
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

void require_same_except_balancer(std::span<const NamedConfig> configs) {
    for (std::size_t i = 1; i < configs.size(); ++i) {
        ExperimentConfig probe = configs[i].config;
        probe.balancer = configs[0].config.balancer;
        probe.seed = configs[0].config.seed;
        probe.out_dir = configs[0].config.out_dir;
        ExperimentConfig base = configs[0].config;
        if (probe.echo() != base.echo()) {
            throw ConfigError("compare: config '" + configs[i].name + "' differs from '" + configs[0].name +
                              "' outside balancer settings");
        }
    }
}

void fill_stats(RunRecord& rec, const std::vector<double>* refs, std::span<const TaskSpec> tasks) {
    const auto& r = *rec.result;
    rec.spikiness = coefficient_spikiness(r.trace);
    if (!refs) return;
    rec.normalized_losses.resize(r.test_losses.size());
    for (std::size_t k = 0; k < r.test_losses.size(); ++k)
        rec.normalized_losses[k] = r.test_losses[k] / std::max((*refs)[k], kEpsFloor);
    const auto [lo, hi] = std::minmax_element(rec.normalized_losses.begin(), rec.normalized_losses.end());
    rec.spread = *hi / std::max(*lo, kEpsFloor);
    double max_scale = 0.0;
    for (const auto& t : tasks) max_scale = std::max(max_scale, t.loss_scale);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        if (tasks[k].loss_scale < max_scale) {
            sum += rec.normalized_losses[k];
            ++n;
        }
    }
    if (n == 0) {
        for (double v : rec.normalized_losses) sum += v;
        n = rec.normalized_losses.size();
    }
    rec.dominated_loss = sum / static_cast<double>(n);
}

} // namespace

ComparisonReport compare(std::span<const NamedConfig> configs, std::span<const std::uint64_t> seeds,
                         const CompareOptions& options) {
    if (configs.empty()) throw ConfigError("compare: no configs");
    if (seeds.empty()) throw ConfigError("compare: no seeds");
    for (const auto& c : configs) c.config.validate();
    require_same_except_balancer(configs);

    ComparisonReport report;
    for (const auto& c : configs) report.names.push_back(c.name);
    report.seeds.assign(seeds.begin(), seeds.end());
    const auto& tasks = configs[0].config.tasks;
    for (const auto& t : tasks) report.task_names.push_back(t.name);
    report.has_references = options.single_task_references;

    const std::size_t n_seeds = seeds.size();
    const std::size_t k = tasks.size();
    report.records.assign(configs.size(), std::vector<RunRecord>(n_seeds));
    report.reference_losses.assign(report.has_references ? n_seeds : 0, std::vector<double>(k, 0.0));
    std::vector<std::string> reference_errors(n_seeds);

    std::vector<std::function<void()>> jobs;
    if (report.has_references) {
        for (std::size_t s = 0; s < n_seeds; ++s) {
            for (std::size_t t = 0; t < k; ++t) {
                jobs.emplace_back([&, s, t] {
                    ExperimentConfig cfg = configs[0].config;
                    cfg.seed = seeds[s];
                    try {
                        report.reference_losses[s][t] = run_single_task(cfg, t).test_losses[0];
                    } catch (const std::exception& e) {
                        report.reference_losses[s][t] = std::numeric_limits<double>::quiet_NaN();
                    }
                });
            }
        }
    }
    for (std::size_t c = 0; c < configs.size(); ++c) {
        for (std::size_t s = 0; s < n_seeds; ++s) {
            jobs.emplace_back([&, c, s] {
                ExperimentConfig cfg = configs[c].config;
                cfg.seed = seeds[s];
                auto& rec = report.records[c][s];
                try {
                    rec.result = run_experiment(cfg);
                } catch (const std::exception& e) {
                    rec.error = e.what();
                }
            });
        }
    }
    run_parallel(jobs, options.threads);

    for (std::size_t c = 0; c < configs.size(); ++c)
        for (std::size_t s = 0; s < n_seeds; ++s)
            if (report.records[c][s].result)
                fill_stats(report.records[c][s], report.has_references ? &report.reference_losses[s] : nullptr, tasks);

    for (std::size_t c = 0; c < configs.size(); ++c) {
        MethodSummary m;
        m.name = configs[c].name;
        std::vector<double> composites, spreads, dominated, spikes;
        std::vector<std::vector<double>> metrics(k), losses(k);
        for (const auto& rec : report.records[c]) {
            ++m.runs;
            if (!rec.result) {
                ++m.failed;
                continue;
            }
            composites.push_back(rec.result->composite);
            spikes.push_back(rec.spikiness);
            if (report.has_references) {
                spreads.push_back(rec.spread);
                dominated.push_back(rec.dominated_loss);
            }
            for (std::size_t t = 0; t < k; ++t) {
                metrics[t].push_back(rec.result->test_metrics[t]);
                losses[t].push_back(rec.result->test_losses[t]);
            }
        }
        std::tie(m.composite_mean, m.composite_std) = mean_std(composites);
        m.spread_median = median(spreads);
        m.dominated_loss_median = median(dominated);
        m.spikiness_mean = mean_std(spikes).first;
        for (std::size_t t = 0; t < k; ++t) {
            const auto [mm, ms] = mean_std(metrics[t]);
            m.metric_mean.push_back(mm);
            m.metric_std.push_back(ms);
            m.loss_mean.push_back(mean_std(losses[t]).first);
        }
        report.summary.push_back(std::move(m));
    }

    for (std::size_t s = 0; s < n_seeds; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < configs.size(); ++c)
            if (const auto& r = report.records[c][s].result) best = std::max(best, r->composite);
        for (std::size_t c = 0; c < configs.size(); ++c)
            if (const auto& r = report.records[c][s].result; r && r->composite == best) ++report.summary[c].wins;
    }
    return report;
}

std::string ComparisonReport::to_table() const {
    std::string out = "method,runs,failed,composite_mean,composite_std,wins,spread_median,dominated_loss_median,spikiness_mean";
    for (const auto& t : task_names) out += ",metric_mean_" + t + ",metric_std_" + t + ",test_loss_mean_" + t;
    out += '\n';
    for (const auto& m : summary) {
        out += m.name + "," + std::to_string(m.runs) + "," + std::to_string(m.failed) + "," +
               format_double(m.composite_mean) + "," + format_double(m.composite_std) + "," + std::to_string(m.wins) +
               "," + format_double(m.spread_median) + "," + format_double(m.dominated_loss_median) + "," +
               format_double(m.spikiness_mean);
        for (std::size_t t = 0; t < task_names.size(); ++t)
            out += "," + format_double(m.metric_mean[t]) + "," + format_double(m.metric_std[t]) + "," +
                   format_double(m.loss_mean[t]);
        out += '\n';
    }
    return out;
}

std::string ComparisonReport::runs_table() const {
    std::string out = "method,seed,status,composite,spread,dominated_loss,spikiness";
    for (const char* prefix : {"test_loss_", "metric_", "normalized_loss_"})
        for (const auto& t : task_names) out += "," + std::string(prefix) + t;
    out += ",error\n";
    const auto nan = format_double(std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < records.size(); ++c) {
        for (std::size_t s = 0; s < records[c].size(); ++s) {
            const auto& rec = records[c][s];
            out += names[c] + "," + std::to_string(seeds[s]) + "," + (rec.result ? "ok" : "failed");
            if (rec.result) {
                const auto& r = *rec.result;
                out += "," + format_double(r.composite) + "," + format_double(rec.spread) + "," +
                       format_double(rec.dominated_loss) + "," + format_double(rec.spikiness);
                for (double v : r.test_losses) out += "," + format_double(v);
                for (double v : r.test_metrics) out += "," + format_double(v);
                for (std::size_t t = 0; t < task_names.size(); ++t)
                    out += "," + (has_references ? format_double(rec.normalized_losses[t]) : nan);
                out += ",\n";
            } else {
                for (std::size_t i = 0; i < 4 + 3 * task_names.size(); ++i) out += "," + nan;
                std::string err = rec.error;
                std::replace(err.begin(), err.end(), ',', ';');
                std::replace(err.begin(), err.end(), '\n', ' ');
                out += "," + err + "\n";
            }
        }
    }
    return out;
}

namespace {

ExperimentConfig with_parameter(ExperimentConfig c, std::string_view parameter, double value) {
    if (parameter == "beta") {
        c.balancer.beta = value;
    } else if (parameter == "temperature") {
        c.balancer.temperature = value;
    } else if (parameter == "alpha") {
        c.balancer.alpha = value;
    } else if (parameter == "lr") {
        c.lr = value;
    } else {
        throw ConfigError("sweep: parameter must be beta, temperature, alpha or lr (got '" + std::string(parameter) + "')");
    }
    c.validate();
    return c;
}

} // namespace

SweepReport sweep(const ExperimentConfig& config, std::string_view parameter, std::span<const double> values,
                  std::span<const std::uint64_t> seeds, const CompareOptions& options) {
    if (values.empty()) throw ConfigError("sweep: no values");
    SweepReport report;
    report.parameter = std::string(parameter);
    report.values.assign(values.begin(), values.end());
    for (double v : values) {
        const NamedConfig cell{std::string(method_name(config.balancer.method)), with_parameter(config, parameter, v)};
        report.cells.push_back(compare(std::span(&cell, 1), seeds, options));
    }
    return report;
}

std::string SweepReport::to_table() const {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto table = cells[i].to_table();
        const auto header_end = table.find('\n');
        if (i == 0) out += "parameter,value," + table.substr(0, header_end + 1);
        std::size_t pos = header_end + 1;
        while (pos < table.size()) {
            const auto end = table.find('\n', pos);
            out += parameter + "," + format_double(values[i]) + "," + table.substr(pos, end - pos + 1);
            pos = end + 1;
        }
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
    text = trim(text);
    std::vector<std::uint64_t> seeds;
    if (const auto dots = text.find(".."); dots != std::string_view::npos) {
        const auto lo = parse_integer(text.substr(0, dots));
        const auto hi = parse_integer(text.substr(dots + 2));
        if (lo < 0 || hi < lo) throw ConfigError("seed range must be 'lo..hi' with 0 <= lo <= hi");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
        return seeds;
    }
    for (const auto& part : split(text, ',')) {
        const auto s = parse_integer(part);
        if (s < 0) throw ConfigError("seeds must be non-negative");
        seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (seeds.empty()) throw ConfigError("no seeds given");
    return seeds;
}

} // namespace lossbal
