#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lossbal/matrix.hpp"
#include "lossbal/tasks.hpp"

namespace lossbal {

/// 2PR/(P+R) over {0,1} labels; 0 when there are no true positives.
double f1_binary(std::span<const int> predictions, std::span<const int> labels);
/// Unweighted mean of one-vs-rest F1 over all n_classes.
double f1_macro(std::span<const int> predictions, std::span<const int> labels, std::size_t n_classes);
/// Concordance correlation with population (1/n) moments. If both inputs are
/// constant with equal means the result is 1 for identical sequences, else 0.
double ccc(std::span<const double> predictions, std::span<const double> labels);

/// Per-task quality score on head outputs: mean per-column F1 (threshold 0.5)
/// for binary, macro F1 of the argmax for multiclass, mean per-column CCC for
/// regression.
double task_metric(TaskKind kind, const Matrix& outputs, const Matrix& targets);

struct ScorePart {
    std::string group;
    double value = 0.0;
};

struct ScoreGroup {
    std::string name;
    /// Required number of parts; 0 accepts any positive count.
    std::size_t parts = 0;
};

/// A composite score is the sum over groups of the mean of that group's parts.
struct CompositeConfig {
    std::vector<ScoreGroup> groups;

    /// 0.5 (CCC_V + CCC_A) + mean of 12 AU F1s + F1_emotion.
    static CompositeConfig affwild2();
    /// 0.5 (CCC_V + CCC_A) + F1_emotion.
    static CompositeConfig affectnet();
    /// Mean F1 over binary attributes.
    static CompositeConfig attributes();
};

/// Throws ConfigError for a configured group with missing parts or a part
/// naming an unconfigured group.
double composite_score(std::span<const ScorePart> parts, const CompositeConfig& config);

/// One logged iteration.
struct TraceRow {
    std::uint64_t iteration = 0;
    std::vector<double> losses;
    std::vector<double> weights;
    std::vector<double> rates;
    double rate_std = 0.0;
    double weighted_total = 0.0;

    bool operator==(const TraceRow&) const = default;
};

/// Append-only; iterations strictly increase and widths stay constant.
class Trace {
public:
    void append(TraceRow row);
    const std::vector<TraceRow>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }

    /// Columns: iteration, loss_0..loss_{K-1}, weight_0.., rate_0.., rate_std, weighted_total.
    std::string to_csv() const;
    bool operator==(const Trace&) const = default;

private:
    std::vector<TraceRow> rows_;
};

/// Population standard deviation of the rates.
double training_rate_std(std::span<const double> rates);
double training_rate_std(const TraceRow& row);
double coefficient_mean(const TraceRow& row);
/// max_t |m(t) - m(t-1)| / max(m(t-1), eps) over consecutive rows, m the
/// coefficient mean. 0 for fewer than two rows.
double coefficient_spikiness(const Trace& trace);
double coefficient_spikiness(std::span<const std::vector<double>> weight_rows);

} // namespace lossbal
