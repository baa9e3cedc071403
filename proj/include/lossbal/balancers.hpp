#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lossbal {

class KeyValueDoc;

/// Floor applied inside every reciprocal and ratio taken by the balancers.
inline constexpr double kEpsFloor = 1e-8;

/// Raw (unweighted) per-task losses observed at one iteration.
struct LossVector {
    std::vector<double> values;
    std::uint64_t iteration = 0;

    std::size_t size() const noexcept { return values.size(); }
};

/// Per-task loss coefficients.
struct WeightVector {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t k) const noexcept { return values[k]; }
};

/// Throws ConfigError on a size mismatch (when expected_tasks != 0) and
/// NumericalError naming the offending task for NaN, Inf or negative entries.
void validate_losses(const LossVector& losses, std::size_t expected_tasks = 0);

/// The two most recent loss vectors, oldest first.
struct LossHistory {
    std::vector<std::vector<double>> entries;

    void push(std::span<const double> losses);
    bool operator==(const LossHistory&) const = default;
};

/// r_k = L_k(t-1) / max(L_k(t-2), eps). All ones until two entries exist.
std::vector<double> training_rates(const LossHistory& history, std::size_t tasks);

// ---------------------------------------------------------------------------
// EMA family

/// Moving-average state. beta weights the CURRENT loss:
///   ema_k(t) = beta * L_k(t) + (1 - beta) * ema_k(t-1)
/// so beta = 1 tracks the latest loss exactly and small beta adapts slowly.
/// The first observed loss initializes the average.
struct EmaState {
    std::vector<double> ema;
    double beta = 0.1;
    LossHistory history;
    bool initialized = false;

    static EmaState make(std::size_t tasks, double beta);
    /// State whose average already holds `initial` (used to probe convergence from a chosen start).
    static EmaState with_average(std::vector<double> initial, double beta);
    std::size_t tasks() const noexcept { return ema.size(); }
};

struct DwaState {
    double temperature = 0.5;
    std::size_t tasks = 0;
    LossHistory history;

    static DwaState make(std::size_t tasks, double temperature);
};

/// How DWA coefficients are combined with the loss average in DWEMA.
enum class DwemaScaling { divide, multiply };

struct DwemaState {
    EmaState ema;
    double temperature = 0.5;
    DwemaScaling scaling = DwemaScaling::divide;

    static DwemaState make(std::size_t tasks, double beta, double temperature,
                           DwemaScaling scaling = DwemaScaling::divide);
};

/// lambda_k = 1 / max(ema_k(t), eps), with ema updated from `losses` first.
WeightVector ema_update(EmaState& state, const LossVector& losses);
std::vector<double> training_rates(const EmaState& state);
std::vector<double> training_rates(const DwaState& state);

/// K * softmax(rates / temperature), shifted by the max for overflow safety.
std::vector<double> dwa_coefficients(std::span<const double> rates, double temperature);
WeightVector dwa_weights(DwaState& state, const LossVector& losses);
/// lambda_k = r_k / max(ema_k(t), eps). No renormalization.
WeightVector rema_weights(EmaState& state, const LossVector& losses);
/// lambda_k = dwa_k / max(ema_k(t), eps) (or dwa_k * ema_k(t) under DwemaScaling::multiply).
WeightVector dwema_weights(DwemaState& state, const LossVector& losses);

// ---------------------------------------------------------------------------
// Uncertainty weighting: learned s_k = log sigma_k^2,
//   total = sum_k exp(-s_k) L_k + s_k

struct UwState {
    std::vector<double> log_vars;
    double learning_rate = 0.01;

    static UwState make(std::size_t tasks, double learning_rate);
};

struct UwResult {
    double total = 0.0;
    std::vector<double> s_gradients;
    WeightVector effective_weights;
};

UwResult uw_combine(const UwState& state, const LossVector& losses);
/// One plain gradient-descent step s_k -= lr * g_k.
void uw_apply(UwState& state, std::span<const double> s_gradients);

// ---------------------------------------------------------------------------
// GradNorm

struct GradNormState {
    std::vector<double> coeffs;
    std::vector<double> initial_losses;
    double alpha = 1.5;
    double learning_rate = 0.01;
    bool initialized = false;

    static GradNormState make(std::size_t tasks, double alpha, double learning_rate);
};

/// Records L_k(0), clamping values below eps (with a warning on stderr).
void gradnorm_init(GradNormState& state, const LossVector& losses);
/// G*_k = mean(grad_norms) * rtilde_k^alpha with rtilde the mean-normalized L_k(t)/L_k(0).
std::vector<double> gradnorm_targets(const GradNormState& state, const LossVector& losses,
                                     std::span<const double> grad_norms);
/// Subgradient of sum_k |G_k - G*_k| with respect to lambda_k, G* held constant.
/// G_k = lambda_k * g_k, so d/dlambda_k = sign(G_k - G*_k) * G_k / lambda_k.
std::vector<double> gradnorm_coefficient_gradient(std::span<const double> coeffs,
                                                  std::span<const double> grad_norms,
                                                  std::span<const double> targets);
/// One descent step on the coefficients, clamp at 1e-6, renormalize to sum K.
/// grad_norms are |grad_W (lambda_k L_k)| at the designated shared layer using
/// the current coefficients.
WeightVector gradnorm_step(GradNormState& state, const LossVector& losses, std::span<const double> grad_norms);

/// sum_k lambda_k L_k with lambda treated as a constant.
double combine(const WeightVector& weights, const LossVector& losses);

// ---------------------------------------------------------------------------
// Uniform interface

enum class Method { baseline, ema, rema, dwema, dwa, uw, gradnorm };

std::string_view method_name(Method m) noexcept;
/// Throws ConfigError for unknown names.
Method parse_method(std::string_view name);

struct BalancerSettings {
    Method method = Method::baseline;
    double beta = 0.1;
    double temperature = 0.5;
    double alpha = 1.5;
    double uw_learning_rate = 0.01;
    double gradnorm_learning_rate = 0.01;
    DwemaScaling dwema_scaling = DwemaScaling::divide;

    /// Throws ConfigError when a hyperparameter is outside its documented range.
    void validate() const;
};

/// A loss-weighting strategy. One instance per training run, updated
/// sequentially; not safe for concurrent mutation.
class Balancer {
public:
    virtual ~Balancer() = default;

    virtual Method method() const noexcept = 0;
    virtual std::size_t tasks() const noexcept = 0;
    /// True when update() needs per-task shared-layer gradient norms.
    virtual bool needs_grad_norms() const noexcept { return false; }
    /// Weights for the current iteration. UW also advances its log-variances.
    virtual WeightVector update(const LossVector& losses, std::span<const double> grad_norms = {}) = 0;
    /// Weights that the next update() would use for gradient-norm probing
    /// (GradNorm's current coefficients; ones elsewhere).
    virtual WeightVector current_weights() const;
    /// Training rates from the balancer's own history, if it keeps one.
    virtual std::vector<double> rates() const;
    virtual std::unique_ptr<Balancer> clone() const = 0;

    std::uint64_t updates() const noexcept { return updates_; }
    /// Key/value text with all hyperparameters and state at 17 significant digits.
    std::string snapshot() const;

protected:
    virtual void write_state(KeyValueDoc& doc) const = 0;
    void check_tasks(const LossVector& losses) const;
    std::uint64_t updates_ = 0;

    friend std::unique_ptr<Balancer> restore_balancer(std::string_view text);
};

std::unique_ptr<Balancer> make_balancer(const BalancerSettings& settings, std::size_t tasks);
/// Throws ConfigError on malformed text.
std::unique_ptr<Balancer> restore_balancer(std::string_view text);

} // namespace lossbal
