#include "lossbal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lossbal/balancers.hpp"
#include "lossbal/error.hpp"
#include "lossbal/keyvalue.hpp"

namespace lossbal {

namespace {

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp) + static_cast<double>(fn);
    if (tp == 0 || denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(tp) / denom;
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw ConfigError(std::string(what) + ": length mismatch");
}

} // namespace

double f1_binary(std::span<const int> predictions, std::span<const int> labels) {
    require_same_length(predictions.size(), labels.size(), "f1_binary");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] != 0;
        const bool y = labels[i] != 0;
        tp += p && y;
        fp += p && !y;
        fn += !p && y;
    }
    return f1_from_counts(tp, fp, fn);
}

double f1_macro(std::span<const int> predictions, std::span<const int> labels, std::size_t n_classes) {
    require_same_length(predictions.size(), labels.size(), "f1_macro");
    if (n_classes == 0) throw ConfigError("f1_macro: n_classes must be positive");
    std::vector<std::size_t> tp(n_classes), fp(n_classes), fn(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto p = predictions[i];
        const auto y = labels[i];
        if (p < 0 || y < 0 || static_cast<std::size_t>(p) >= n_classes || static_cast<std::size_t>(y) >= n_classes)
            throw ConfigError("f1_macro: class index out of range");
        if (p == y) {
            ++tp[static_cast<std::size_t>(p)];
        } else {
            ++fp[static_cast<std::size_t>(p)];
            ++fn[static_cast<std::size_t>(y)];
        }
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) sum += f1_from_counts(tp[c], fp[c], fn[c]);
    return sum / static_cast<double>(n_classes);
}

double ccc(std::span<const double> x, std::span<const double> y) {
    require_same_length(x.size(), y.size(), "ccc");
    if (x.size() < 2) throw ConfigError("ccc: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        cov += (x[i] - mx) * (y[i] - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    const double denom = vx + vy + (mx - my) * (mx - my);
    if (denom == 0.0) return std::equal(x.begin(), x.end(), y.begin()) ? 1.0 : 0.0;
    return 2.0 * cov / denom;
}

double task_metric(TaskKind kind, const Matrix& outputs, const Matrix& targets) {
    if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols())
        throw ConfigError("task_metric: outputs and targets differ in shape");
    const std::size_t n = outputs.rows();
    switch (kind) {
    case TaskKind::binary_bce: {
        double sum = 0.0;
        std::vector<int> p(n), y(n);
        for (std::size_t c = 0; c < outputs.cols(); ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                p[i] = outputs(i, c) >= 0.5 ? 1 : 0;
                y[i] = targets(i, c) >= 0.5 ? 1 : 0;
            }
            sum += f1_binary(p, y);
        }
        return sum / static_cast<double>(outputs.cols());
    }
    case TaskKind::multiclass_ce: {
        std::vector<int> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto o = outputs.row(i);
            const auto t = targets.row(i);
            p[i] = static_cast<int>(std::max_element(o.begin(), o.end()) - o.begin());
            y[i] = static_cast<int>(std::max_element(t.begin(), t.end()) - t.begin());
        }
        return f1_macro(p, y, outputs.cols());
    }
    case TaskKind::regression_mse: {
        double sum = 0.0;
        std::vector<double> p(n), y(n);
        for (std::size_t c = 0; c < outputs.cols(); ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                p[i] = outputs(i, c);
                y[i] = targets(i, c);
            }
            sum += ccc(p, y);
        }
        return sum / static_cast<double>(outputs.cols());
    }
    }
    return 0.0;
}

CompositeConfig CompositeConfig::affwild2() { return {{{"va", 2}, {"au", 12}, {"emotion", 1}}}; }

CompositeConfig CompositeConfig::affectnet() { return {{{"va", 2}, {"emotion", 1}}}; }

CompositeConfig CompositeConfig::attributes() { return {{{"attributes", 0}}}; }

double composite_score(std::span<const ScorePart> parts, const CompositeConfig& config) {
    if (config.groups.empty()) throw ConfigError("composite_score: no groups configured");
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& g : config.groups) acc[g.name] = {0.0, 0};
    for (const auto& p : parts) {
        auto it = acc.find(p.group);
        if (it == acc.end()) throw ConfigError("composite_score: part for unconfigured group '" + p.group + "'");
        it->second.first += p.value;
        ++it->second.second;
    }
    double total = 0.0;
    for (const auto& g : config.groups) {
        const auto [sum, count] = acc[g.name];
        if (count == 0 || (g.parts != 0 && count != g.parts)) {
            throw ConfigError("composite_score: group '" + g.name + "' expects " +
                              (g.parts ? std::to_string(g.parts) : std::string("at least one")) + " parts, got " +
                              std::to_string(count));
        }
        total += sum / static_cast<double>(count);
    }
    return total;
}

void Trace::append(TraceRow row) {
    if (!rows_.empty()) {
        const auto& last = rows_.back();
        if (row.iteration <= last.iteration) throw ConfigError("trace: iterations must strictly increase");
        if (row.losses.size() != last.losses.size() || row.weights.size() != last.weights.size() ||
            row.rates.size() != last.rates.size())
            throw ConfigError("trace: row width changed");
    }
    if (row.losses.size() != row.weights.size() || row.losses.size() != row.rates.size())
        throw ConfigError("trace: losses, weights and rates must have equal width");
    rows_.push_back(std::move(row));
}

std::string Trace::to_csv() const {
    std::string out = "iteration";
    const std::size_t k = rows_.empty() ? 0 : rows_.front().losses.size();
    for (const char* prefix : {"loss_", "weight_", "rate_"})
        for (std::size_t i = 0; i < k; ++i) out += "," + std::string(prefix) + std::to_string(i);
    out += ",rate_std,weighted_total\n";
    for (const auto& r : rows_) {
        out += std::to_string(r.iteration);
        for (const auto* v : {&r.losses, &r.weights, &r.rates})
            for (double x : *v) out += "," + format_double(x);
        out += "," + format_double(r.rate_std) + "," + format_double(r.weighted_total) + "\n";
    }
    return out;
}

double training_rate_std(std::span<const double> rates) {
    if (rates.empty()) return 0.0;
    const double n = static_cast<double>(rates.size());
    double mean = 0.0;
    for (double r : rates) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rates) var += (r - mean) * (r - mean);
    return std::sqrt(var / n);
}

double training_rate_std(const TraceRow& row) { return training_rate_std(row.rates); }

double coefficient_mean(const TraceRow& row) {
    if (row.weights.empty()) return 0.0;
    double s = 0.0;
    for (double w : row.weights) s += w;
    return s / static_cast<double>(row.weights.size());
}

double coefficient_spikiness(std::span<const std::vector<double>> weight_rows) {
    double worst = 0.0;
    double prev = 0.0;
    for (std::size_t t = 0; t < weight_rows.size(); ++t) {
        const auto& w = weight_rows[t];
        double m = 0.0;
        for (double v : w) m += v;
        m = w.empty() ? 0.0 : m / static_cast<double>(w.size());
        if (t > 0) worst = std::max(worst, std::abs(m - prev) / std::max(prev, kEpsFloor));
        prev = m;
    }
    return worst;
}

double coefficient_spikiness(const Trace& trace) {
    std::vector<std::vector<double>> rows;
    rows.reserve(trace.size());
    for (const auto& r : trace.rows()) rows.push_back(r.weights);
    return coefficient_spikiness(rows);
}

} // namespace lossbal
