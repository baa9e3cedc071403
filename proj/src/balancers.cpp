#include "lossbal/balancers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <numeric>

#include "lossbal/error.hpp"
#include "lossbal/keyvalue.hpp"

namespace lossbal {

void validate_losses(const LossVector& losses, std::size_t expected_tasks) {
    if (losses.values.empty()) throw ConfigError("loss vector is empty");
    if (expected_tasks != 0 && losses.size() != expected_tasks) {
        throw ConfigError("loss vector has " + std::to_string(losses.size()) + " tasks, expected " +
                          std::to_string(expected_tasks));
    }
    for (std::size_t k = 0; k < losses.size(); ++k) {
        const double v = losses.values[k];
        if (!std::isfinite(v) || v < 0.0) {
            throw NumericalError("invalid loss " + format_double(v) + " for task " + std::to_string(k) +
                                 " at iteration " + std::to_string(losses.iteration));
        }
    }
}

void LossHistory::push(std::span<const double> losses) {
    entries.emplace_back(losses.begin(), losses.end());
    if (entries.size() > 2) entries.erase(entries.begin());
}

std::vector<double> training_rates(const LossHistory& history, std::size_t tasks) {
    std::vector<double> rates(tasks, 1.0);
    if (history.entries.size() < 2) return rates;
    const auto& older = history.entries[0];
    const auto& newer = history.entries[1];
    for (std::size_t k = 0; k < tasks; ++k) rates[k] = newer[k] / std::max(older[k], kEpsFloor);
    return rates;
}

// ---------------------------------------------------------------------------

EmaState EmaState::make(std::size_t tasks, double beta) {
    EmaState s;
    s.ema.assign(tasks, 0.0);
    s.beta = beta;
    return s;
}

EmaState EmaState::with_average(std::vector<double> initial, double beta) {
    EmaState s;
    s.ema = std::move(initial);
    s.beta = beta;
    s.initialized = true;
    return s;
}

DwaState DwaState::make(std::size_t tasks, double temperature) {
    DwaState s;
    s.tasks = tasks;
    s.temperature = temperature;
    return s;
}

DwemaState DwemaState::make(std::size_t tasks, double beta, double temperature, DwemaScaling scaling) {
    DwemaState s;
    s.ema = EmaState::make(tasks, beta);
    s.temperature = temperature;
    s.scaling = scaling;
    return s;
}

namespace {

void check_beta(double beta) {
    if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in (0, 1], got " + format_double(beta));
}

// Advances the moving average without touching the history.
void advance_average(EmaState& state, const LossVector& losses) {
    check_beta(state.beta);
    validate_losses(losses, state.tasks());
    if (!state.initialized) {
        state.ema = losses.values;
        state.initialized = true;
        return;
    }
    for (std::size_t k = 0; k < state.tasks(); ++k)
        state.ema[k] = state.beta * losses.values[k] + (1.0 - state.beta) * state.ema[k];
}

} // namespace

WeightVector ema_update(EmaState& state, const LossVector& losses) {
    advance_average(state, losses);
    WeightVector w;
    w.values.resize(state.tasks());
    for (std::size_t k = 0; k < state.tasks(); ++k) w.values[k] = 1.0 / std::max(state.ema[k], kEpsFloor);
    state.history.push(losses.values);
    return w;
}

std::vector<double> training_rates(const EmaState& state) { return training_rates(state.history, state.tasks()); }

std::vector<double> training_rates(const DwaState& state) { return training_rates(state.history, state.tasks); }

std::vector<double> dwa_coefficients(std::span<const double> rates, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive, got " + format_double(temperature));
    const std::size_t k = rates.size();
    std::vector<double> out(k);
    double shift = -std::numeric_limits<double>::infinity();
    for (double r : rates) shift = std::max(shift, r / temperature);
    double denom = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = std::exp(rates[i] / temperature - shift);
        denom += out[i];
    }
    for (double& v : out) v = static_cast<double>(k) * v / denom;
    return out;
}

WeightVector dwa_weights(DwaState& state, const LossVector& losses) {
    validate_losses(losses, state.tasks);
    const auto rates = training_rates(state);
    WeightVector w{dwa_coefficients(rates, state.temperature)};
    state.history.push(losses.values);
    return w;
}

WeightVector rema_weights(EmaState& state, const LossVector& losses) {
    const auto rates = training_rates(state);
    advance_average(state, losses);
    WeightVector w;
    w.values.resize(state.tasks());
    for (std::size_t k = 0; k < state.tasks(); ++k) w.values[k] = rates[k] / std::max(state.ema[k], kEpsFloor);
    state.history.push(losses.values);
    return w;
}

WeightVector dwema_weights(DwemaState& state, const LossVector& losses) {
    const auto rates = training_rates(state.ema);
    const auto dwa = dwa_coefficients(rates, state.temperature);
    advance_average(state.ema, losses);
    WeightVector w;
    w.values.resize(state.ema.tasks());
    for (std::size_t k = 0; k < w.values.size(); ++k) {
        w.values[k] = state.scaling == DwemaScaling::divide ? dwa[k] / std::max(state.ema.ema[k], kEpsFloor)
                                                            : dwa[k] * state.ema.ema[k];
    }
    state.ema.history.push(losses.values);
    return w;
}

// ---------------------------------------------------------------------------

UwState UwState::make(std::size_t tasks, double learning_rate) {
    UwState s;
    s.log_vars.assign(tasks, 0.0);
    s.learning_rate = learning_rate;
    return s;
}

UwResult uw_combine(const UwState& state, const LossVector& losses) {
    validate_losses(losses, state.log_vars.size());
    UwResult r;
    const std::size_t k = losses.size();
    r.s_gradients.resize(k);
    r.effective_weights.values.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double s = state.log_vars[i];
        const double w = std::exp(-s);
        r.total += w * losses.values[i] + s;
        r.s_gradients[i] = -w * losses.values[i] + 1.0;
        r.effective_weights.values[i] = w;
    }
    return r;
}

void uw_apply(UwState& state, std::span<const double> s_gradients) {
    if (s_gradients.size() != state.log_vars.size()) throw ConfigError("uw_apply: gradient size mismatch");
    for (std::size_t i = 0; i < s_gradients.size(); ++i) {
        state.log_vars[i] -= state.learning_rate * s_gradients[i];
        if (!std::isfinite(state.log_vars[i]))
            throw NumericalError("uncertainty log-variance for task " + std::to_string(i) + " became non-finite");
    }
}

// ---------------------------------------------------------------------------

GradNormState GradNormState::make(std::size_t tasks, double alpha, double learning_rate) {
    GradNormState s;
    s.coeffs.assign(tasks, 1.0);
    s.alpha = alpha;
    s.learning_rate = learning_rate;
    return s;
}

void gradnorm_init(GradNormState& state, const LossVector& losses) {
    validate_losses(losses, state.coeffs.size());
    state.initial_losses = losses.values;
    for (std::size_t k = 0; k < losses.size(); ++k) {
        if (state.initial_losses[k] <= kEpsFloor) {
            std::cerr << "warning: gradnorm initial loss for task " << k << " is "
                      << format_double(state.initial_losses[k]) << "; clamped to " << kEpsFloor << '\n';
            state.initial_losses[k] = kEpsFloor;
        }
    }
    state.initialized = true;
}

std::vector<double> gradnorm_targets(const GradNormState& state, const LossVector& losses,
                                     std::span<const double> grad_norms) {
    const std::size_t k = state.coeffs.size();
    if (!state.initialized) throw ConfigError("gradnorm: initial losses not captured");
    validate_losses(losses, k);
    if (grad_norms.size() != k) throw ConfigError("gradnorm: expected " + std::to_string(k) + " gradient norms");
    std::vector<double> ratio(k);
    double mean_ratio = 0.0;
    double mean_norm = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (!std::isfinite(grad_norms[i]) || grad_norms[i] < 0.0)
            throw NumericalError("gradnorm: invalid gradient norm for task " + std::to_string(i));
        ratio[i] = losses.values[i] / state.initial_losses[i];
        mean_ratio += ratio[i];
        mean_norm += grad_norms[i];
    }
    mean_ratio /= static_cast<double>(k);
    mean_norm /= static_cast<double>(k);
    std::vector<double> targets(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double inverse_rate = ratio[i] / std::max(mean_ratio, kEpsFloor);
        targets[i] = mean_norm * std::pow(inverse_rate, state.alpha);
    }
    return targets;
}

std::vector<double> gradnorm_coefficient_gradient(std::span<const double> coeffs, std::span<const double> grad_norms,
                                                  std::span<const double> targets) {
    std::vector<double> g(coeffs.size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        const double diff = grad_norms[i] - targets[i];
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        g[i] = sign * grad_norms[i] / std::max(coeffs[i], kEpsFloor);
    }
    return g;
}

WeightVector gradnorm_step(GradNormState& state, const LossVector& losses, std::span<const double> grad_norms) {
    const auto targets = gradnorm_targets(state, losses, grad_norms);
    const auto grad = gradnorm_coefficient_gradient(state.coeffs, grad_norms, targets);
    double sum = 0.0;
    for (std::size_t i = 0; i < state.coeffs.size(); ++i) {
        state.coeffs[i] = std::max(state.coeffs[i] - state.learning_rate * grad[i], 1e-6);
        sum += state.coeffs[i];
    }
    const double scale = static_cast<double>(state.coeffs.size()) / sum;
    for (double& c : state.coeffs) c *= scale;
    return WeightVector{state.coeffs};
}

double combine(const WeightVector& weights, const LossVector& losses) {
    if (weights.size() != losses.size()) {
        throw ConfigError("combine: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(losses.size()) + " losses");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) total += weights.values[k] * losses.values[k];
    return total;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 7> kMethodNames{{
    {Method::baseline, "baseline"},
    {Method::ema, "ema"},
    {Method::rema, "rema"},
    {Method::dwema, "dwema"},
    {Method::dwa, "dwa"},
    {Method::uw, "uw"},
    {Method::gradnorm, "gradnorm"},
}};

} // namespace

std::string_view method_name(Method m) noexcept {
    for (const auto& [method, name] : kMethodNames)
        if (method == m) return name;
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (const auto& [method, n] : kMethodNames)
        if (n == name) return method;
    throw ConfigError("unknown balancer '" + std::string(name) +
                      "' (expected baseline, ema, rema, dwema, dwa, uw, gradnorm)");
}

void BalancerSettings::validate() const {
    check_beta(beta);
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw ConfigError("temperature must be positive, got " + format_double(temperature));
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0, got " + format_double(alpha));
    if (!(uw_learning_rate > 0.0)) throw ConfigError("uw learning rate must be positive");
    if (!(gradnorm_learning_rate > 0.0)) throw ConfigError("gradnorm learning rate must be positive");
}

WeightVector Balancer::current_weights() const { return WeightVector{std::vector<double>(tasks(), 1.0)}; }

std::vector<double> Balancer::rates() const { return std::vector<double>(tasks(), 1.0); }

void Balancer::check_tasks(const LossVector& losses) const { validate_losses(losses, tasks()); }

namespace {

void write_history(KeyValueDoc& doc, const LossHistory& h) {
    doc.add("history_len", std::to_string(h.entries.size()));
    for (std::size_t i = 0; i < h.entries.size(); ++i) doc.add("history." + std::to_string(i), h.entries[i]);
}

LossHistory read_history(const KeyValueDoc& doc, std::size_t tasks) {
    LossHistory h;
    const auto n = doc.integer("history_len");
    if (n < 0 || n > 2) throw ConfigError("history_len must be 0, 1 or 2");
    for (std::int64_t i = 0; i < n; ++i) {
        auto values = doc.numbers("history." + std::to_string(i));
        if (values.size() != tasks) throw ConfigError("history entry has wrong task count");
        h.entries.push_back(std::move(values));
    }
    return h;
}

std::vector<double> read_array(const KeyValueDoc& doc, std::string_view key, std::size_t tasks) {
    auto v = doc.numbers(key);
    if (v.size() != tasks) {
        throw ConfigError("'" + std::string(key) + "' has " + std::to_string(v.size()) + " entries, expected " +
                          std::to_string(tasks));
    }
    return v;
}

bool read_flag(const KeyValueDoc& doc, std::string_view key) {
    const auto v = doc.integer(key);
    if (v != 0 && v != 1) throw ConfigError("'" + std::string(key) + "' must be 0 or 1");
    return v == 1;
}

class BaselineBalancer final : public Balancer {
public:
    explicit BaselineBalancer(std::size_t tasks) : tasks_(tasks) {}
    Method method() const noexcept override { return Method::baseline; }
    std::size_t tasks() const noexcept override { return tasks_; }
    WeightVector update(const LossVector& losses, std::span<const double>) override {
        check_tasks(losses);
        ++updates_;
        return WeightVector{std::vector<double>(tasks_, 1.0)};
    }
    std::unique_ptr<Balancer> clone() const override { return std::make_unique<BaselineBalancer>(*this); }

protected:
    void write_state(KeyValueDoc&) const override {}

private:
    std::size_t tasks_;
};

class EmaBalancer final : public Balancer {
public:
    EmaBalancer(Method method, DwemaState state) : method_(method), state_(std::move(state)) {}
    Method method() const noexcept override { return method_; }
    std::size_t tasks() const noexcept override { return state_.ema.tasks(); }
    WeightVector update(const LossVector& losses, std::span<const double>) override {
        check_tasks(losses);
        ++updates_;
        switch (method_) {
        case Method::rema: return rema_weights(state_.ema, losses);
        case Method::dwema: return dwema_weights(state_, losses);
        default: return ema_update(state_.ema, losses);
        }
    }
    std::vector<double> rates() const override { return training_rates(state_.ema); }
    std::unique_ptr<Balancer> clone() const override { return std::make_unique<EmaBalancer>(*this); }

    const DwemaState& state() const noexcept { return state_; }

protected:
    void write_state(KeyValueDoc& doc) const override {
        doc.add("beta", state_.ema.beta);
        doc.add("temperature", state_.temperature);
        doc.add("dwema_scaling", state_.scaling == DwemaScaling::divide ? "divide" : "multiply");
        doc.add("initialized", state_.ema.initialized ? "1" : "0");
        doc.add("ema", state_.ema.ema);
        write_history(doc, state_.ema.history);
    }

private:
    Method method_;
    DwemaState state_;
};

class DwaBalancer final : public Balancer {
public:
    explicit DwaBalancer(DwaState state) : state_(std::move(state)) {}
    Method method() const noexcept override { return Method::dwa; }
    std::size_t tasks() const noexcept override { return state_.tasks; }
    WeightVector update(const LossVector& losses, std::span<const double>) override {
        check_tasks(losses);
        ++updates_;
        return dwa_weights(state_, losses);
    }
    std::vector<double> rates() const override { return training_rates(state_); }
    std::unique_ptr<Balancer> clone() const override { return std::make_unique<DwaBalancer>(*this); }

protected:
    void write_state(KeyValueDoc& doc) const override {
        doc.add("temperature", state_.temperature);
        write_history(doc, state_.history);
    }

private:
    DwaState state_;
};

class UwBalancer final : public Balancer {
public:
    explicit UwBalancer(UwState state) : state_(std::move(state)) {}
    Method method() const noexcept override { return Method::uw; }
    std::size_t tasks() const noexcept override { return state_.log_vars.size(); }
    WeightVector update(const LossVector& losses, std::span<const double>) override {
        check_tasks(losses);
        ++updates_;
        auto r = uw_combine(state_, losses);
        uw_apply(state_, r.s_gradients);
        return std::move(r.effective_weights);
    }
    WeightVector current_weights() const override {
        WeightVector w;
        for (double s : state_.log_vars) w.values.push_back(std::exp(-s));
        return w;
    }
    std::unique_ptr<Balancer> clone() const override { return std::make_unique<UwBalancer>(*this); }

protected:
    void write_state(KeyValueDoc& doc) const override {
        doc.add("learning_rate", state_.learning_rate);
        doc.add("log_vars", state_.log_vars);
    }

private:
    UwState state_;
};

class GradNormBalancer final : public Balancer {
public:
    explicit GradNormBalancer(GradNormState state) : state_(std::move(state)) {}
    Method method() const noexcept override { return Method::gradnorm; }
    std::size_t tasks() const noexcept override { return state_.coeffs.size(); }
    bool needs_grad_norms() const noexcept override { return true; }
    WeightVector update(const LossVector& losses, std::span<const double> grad_norms) override {
        check_tasks(losses);
        ++updates_;
        // The first observation only fixes L_k(0); coefficients start at one.
        if (!state_.initialized) {
            gradnorm_init(state_, losses);
            return WeightVector{state_.coeffs};
        }
        return gradnorm_step(state_, losses, grad_norms);
    }
    WeightVector current_weights() const override { return WeightVector{state_.coeffs}; }
    std::unique_ptr<Balancer> clone() const override { return std::make_unique<GradNormBalancer>(*this); }

protected:
    void write_state(KeyValueDoc& doc) const override {
        doc.add("alpha", state_.alpha);
        doc.add("learning_rate", state_.learning_rate);
        doc.add("initialized", state_.initialized ? "1" : "0");
        doc.add("coeffs", state_.coeffs);
        if (state_.initialized) doc.add("initial_losses", state_.initial_losses);
    }

private:
    GradNormState state_;
};

} // namespace

std::string Balancer::snapshot() const {
    KeyValueDoc doc;
    doc.add("method", std::string(method_name(method())));
    doc.add("tasks", std::to_string(tasks()));
    doc.add("updates", std::to_string(updates_));
    write_state(doc);
    return doc.str();
}

std::unique_ptr<Balancer> make_balancer(const BalancerSettings& settings, std::size_t tasks) {
    settings.validate();
    if (tasks == 0) throw ConfigError("balancer needs at least one task");
    switch (settings.method) {
    case Method::baseline: return std::make_unique<BaselineBalancer>(tasks);
    case Method::ema:
    case Method::rema:
    case Method::dwema:
        return std::make_unique<EmaBalancer>(
            settings.method, DwemaState::make(tasks, settings.beta, settings.temperature, settings.dwema_scaling));
    case Method::dwa: return std::make_unique<DwaBalancer>(DwaState::make(tasks, settings.temperature));
    case Method::uw: return std::make_unique<UwBalancer>(UwState::make(tasks, settings.uw_learning_rate));
    case Method::gradnorm:
        return std::make_unique<GradNormBalancer>(
            GradNormState::make(tasks, settings.alpha, settings.gradnorm_learning_rate));
    }
    throw ConfigError("unhandled balancer method");
}

std::unique_ptr<Balancer> restore_balancer(std::string_view text) {
    const auto doc = KeyValueDoc::parse(text);
    const Method method = parse_method(doc.at("method"));
    const auto tasks_signed = doc.integer("tasks");
    if (tasks_signed <= 0) throw ConfigError("snapshot: tasks must be positive");
    const auto tasks = static_cast<std::size_t>(tasks_signed);
    const auto updates = doc.integer("updates");
    if (updates < 0) throw ConfigError("snapshot: negative update counter");

    std::unique_ptr<Balancer> out;
    switch (method) {
    case Method::baseline: out = std::make_unique<BaselineBalancer>(tasks); break;
    case Method::ema:
    case Method::rema:
    case Method::dwema: {
        DwemaState s;
        s.ema.beta = doc.number("beta");
        check_beta(s.ema.beta);
        s.temperature = doc.number("temperature");
        const auto scaling = doc.at("dwema_scaling");
        if (scaling != "divide" && scaling != "multiply") throw ConfigError("snapshot: bad dwema_scaling");
        s.scaling = scaling == "divide" ? DwemaScaling::divide : DwemaScaling::multiply;
        s.ema.initialized = read_flag(doc, "initialized");
        s.ema.ema = read_array(doc, "ema", tasks);
        s.ema.history = read_history(doc, tasks);
        out = std::make_unique<EmaBalancer>(method, std::move(s));
        break;
    }
    case Method::dwa: {
        DwaState s = DwaState::make(tasks, doc.number("temperature"));
        if (!(s.temperature > 0.0)) throw ConfigError("snapshot: temperature must be positive");
        s.history = read_history(doc, tasks);
        out = std::make_unique<DwaBalancer>(std::move(s));
        break;
    }
    case Method::uw: {
        UwState s;
        s.learning_rate = doc.number("learning_rate");
        s.log_vars = read_array(doc, "log_vars", tasks);
        out = std::make_unique<UwBalancer>(std::move(s));
        break;
    }
    case Method::gradnorm: {
        GradNormState s;
        s.alpha = doc.number("alpha");
        s.learning_rate = doc.number("learning_rate");
        s.initialized = read_flag(doc, "initialized");
        s.coeffs = read_array(doc, "coeffs", tasks);
        if (s.initialized) s.initial_losses = read_array(doc, "initial_losses", tasks);
        out = std::make_unique<GradNormBalancer>(std::move(s));
        break;
    }
    }
    out->updates_ = static_cast<std::uint64_t>(updates);
    return out;
}

} // namespace lossbal
