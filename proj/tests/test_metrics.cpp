#include <doctest.h>

#include <cmath>
#include <vector>

#include "lossbal/balancers.hpp"
#include "lossbal/error.hpp"
#include "lossbal/metrics.hpp"
#include "lossbal/rng.hpp"

using namespace lossbal;

TEST_CASE("f1_binary") {
    CHECK(f1_binary(std::vector{1, 0, 1}, std::vector{1, 0, 1}) == 1.0);
    // TP=1 (first), FP=1 (second), FN=1 (third)
    CHECK(f1_binary(std::vector{1, 1, 0, 0}, std::vector{1, 0, 1, 0}) == 0.5);
    CHECK(f1_binary(std::vector{0, 0, 0}, std::vector{0, 1, 1}) == 0.0);
    CHECK(f1_binary(std::vector{0, 0}, std::vector{0, 0}) == 0.0);
    CHECK_THROWS_AS(f1_binary(std::vector{1}, std::vector{1, 0}), ConfigError);
}

TEST_CASE("f1_macro") {
    CHECK(f1_macro(std::vector{0, 1, 2, 1}, std::vector{0, 1, 2, 1}, 3) == 1.0);

    // per-class F1: class 0 = 1/2, class 1 = 4/5, class 2 = 2/3
    const std::vector labels{0, 0, 1, 1, 2, 2};
    const std::vector preds{0, 1, 1, 1, 2, 0};
    CHECK(f1_macro(preds, labels, 3) == doctest::Approx((0.5 + 0.8 + 2.0 / 3.0) / 3.0).epsilon(1e-15));
    CHECK(f1_macro(preds, labels, 3) == doctest::Approx(59.0 / 90.0).epsilon(1e-15));

    const std::vector p2{1, 0, 1, 1, 0};
    const std::vector l2{1, 1, 0, 1, 0};
    std::vector<int> p2n, l2n;
    for (int v : p2) p2n.push_back(1 - v);
    for (int v : l2) l2n.push_back(1 - v);
    CHECK(f1_macro(p2, l2, 2) == doctest::Approx(0.5 * (f1_binary(p2, l2) + f1_binary(p2n, l2n))).epsilon(1e-15));
    CHECK_THROWS_AS(f1_macro(std::vector{3}, std::vector{0}, 3), ConfigError);
}

TEST_CASE("ccc") {
    CHECK(ccc(std::vector{1.0, 2.0, 3.0}, std::vector{1.0, 2.0, 4.0}) == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
    CHECK(std::abs(ccc(std::vector{1.0, 2.0, 3.0}, std::vector{1.0, 2.0, 4.0}) - 6.0 / 7.0) < 1e-12);
    CHECK(ccc(std::vector{0.3, -1.0, 2.0}, std::vector{0.3, -1.0, 2.0}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ccc(std::vector{2.0, 2.0, 2.0}, std::vector{1.0, 2.0, 3.0}) == 0.0);
    CHECK(ccc(std::vector{2.0, 2.0}, std::vector{2.0, 2.0}) == 1.0);
    CHECK_THROWS_AS(ccc(std::vector{1.0}, std::vector{1.0}), ConfigError);
    CHECK_THROWS_AS(ccc(std::vector{1.0, 2.0}, std::vector{1.0}), ConfigError);
}

TEST_CASE("metric ranges and symmetry") {
    SplitMix64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(20);
        std::vector<double> x(n), y(n);
        std::vector<int> a(n), b(n), c(n), d(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.normal();
            y[i] = 0.5 * x[i] + rng.normal();
            a[i] = int(rng.below(2));
            b[i] = int(rng.below(2));
            c[i] = int(rng.below(4));
            d[i] = int(rng.below(4));
        }
        const double v = ccc(x, y);
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
        CHECK(v == doctest::Approx(ccc(y, x)).epsilon(1e-15));
        CHECK(ccc(x, x) == doctest::Approx(1.0).epsilon(1e-14));
        const double f = f1_binary(a, b);
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
        const double m = f1_macro(c, d, 4);
        CHECK(m >= 0.0);
        CHECK(m <= 1.0);
    }
}

TEST_CASE("task_metric") {
    const Matrix probs(4, 1, {0.9, 0.2, 0.6, 0.4});
    const Matrix labels(4, 1, {1.0, 0.0, 0.0, 1.0});
    CHECK(task_metric(TaskKind::binary_bce, probs, labels) == 0.5);
    const Matrix soft(3, 2, {0.7, 0.3, 0.1, 0.9, 0.6, 0.4});
    const Matrix hot(3, 2, {1.0, 0.0, 0.0, 1.0, 1.0, 0.0});
    CHECK(task_metric(TaskKind::multiclass_ce, soft, hot) == 1.0);
    const Matrix reg(3, 1, {1.0, 2.0, 3.0});
    CHECK(task_metric(TaskKind::regression_mse, reg, Matrix(3, 1, {1.0, 2.0, 4.0})) ==
          doctest::Approx(6.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("composite_score") {
    SUBCASE("affwild2 maximum") {
        std::vector<ScorePart> parts{{"va", 1.0}, {"va", 1.0}, {"emotion", 1.0}};
        for (int i = 0; i < 12; ++i) parts.push_back({"au", 1.0});
        CHECK(composite_score(parts, CompositeConfig::affwild2()) == 3.0);
    }
    SUBCASE("affwild2 worked example matches the formula") {
        std::vector<ScorePart> parts{{"va", 0.5}, {"va", 0.5}, {"emotion", 0.4}};
        for (int i = 0; i < 12; ++i) parts.push_back({"au", 0.6});
        CHECK(composite_score(parts, CompositeConfig::affwild2()) == doctest::Approx(1.5).epsilon(1e-15));
    }
    SUBCASE("affwild2 on synthetic metrics equals the quoted formula") {
        SplitMix64 rng(10);
        for (int trial = 0; trial < 50; ++trial) {
            const double v = rng.uniform(), a = rng.uniform(), e = rng.uniform();
            std::vector<double> au(12);
            std::vector<ScorePart> parts{{"emotion", e}, {"va", v}};
            double au_sum = 0.0;
            for (double& x : au) {
                x = rng.uniform();
                au_sum += x;
                parts.push_back({"au", x});
            }
            parts.push_back({"va", a});
            const double formula = 0.5 * (v + a) + au_sum / 12.0 + e;
            CHECK(composite_score(parts, CompositeConfig::affwild2()) == doctest::Approx(formula).epsilon(1e-14));
        }
    }
    SUBCASE("affectnet") {
        const std::vector<ScorePart> parts{{"va", 0.4}, {"va", 0.6}, {"emotion", 0.5}};
        CHECK(composite_score(parts, CompositeConfig::affectnet()) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("linear in each part") {
        const auto cfg = CompositeConfig::affectnet();
        auto at = [&](double x) {
            const std::vector<ScorePart> parts{{"va", x}, {"va", 0.6}, {"emotion", 0.5}};
            return composite_score(parts, cfg);
        };
        CHECK(at(0.75) - at(0.25) == doctest::Approx(2.0 * (at(0.5) - at(0.25))).epsilon(1e-14));
    }
    SUBCASE("errors") {
        const std::vector<ScorePart> missing{{"va", 0.4}, {"va", 0.6}};
        CHECK_THROWS_AS(composite_score(missing, CompositeConfig::affectnet()), ConfigError);
        const std::vector<ScorePart> stray{{"va", 0.4}, {"va", 0.6}, {"emotion", 0.5}, {"au", 0.1}};
        CHECK_THROWS_AS(composite_score(stray, CompositeConfig::affectnet()), ConfigError);
        const std::vector<ScorePart> too_few{{"va", 0.4}, {"emotion", 0.5}};
        CHECK_THROWS_AS(composite_score(too_few, CompositeConfig::affectnet()), ConfigError);
    }
    SUBCASE("attributes accepts any count") {
        const std::vector<ScorePart> parts{{"attributes", 0.2}, {"attributes", 0.4}, {"attributes", 0.9}};
        CHECK(composite_score(parts, CompositeConfig::attributes()) == doctest::Approx(0.5).epsilon(1e-15));
    }
}

TEST_CASE("training_rate_std") {
    CHECK(training_rate_std(std::vector{0.5, 1.5}) == 0.5);
    CHECK(training_rate_std(std::vector{0.9, 0.9, 0.9}) == 0.0);
    TraceRow row;
    row.rates = {1.0, 1.0};
    CHECK(training_rate_std(row) == 0.0);

    // constant losses keep every rate at 1
    LossHistory h;
    for (int t = 0; t < 5; ++t) {
        h.push(std::vector{2.0, 0.3, 7.0});
        CHECK(training_rate_std(training_rates(h, 3)) == 0.0);
    }
}

TEST_CASE("training_rate_std is invariant under per-task rescaling") {
    SplitMix64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        LossHistory a, b;
        const std::size_t k = 2 + rng.below(4);
        const std::size_t task = rng.below(k);
        const double c = trial % 2 ? 10.0 : 1e4;
        for (int t = 0; t < 3; ++t) {
            std::vector<double> l(k);
            for (double& v : l) v = static_cast<double>(1 + rng.below(1u << 20)) * 0x1.0p-16;
            auto s = l;
            s[task] *= c;
            a.push(l);
            b.push(s);
        }
        CHECK(training_rate_std(training_rates(a, k)) == training_rate_std(training_rates(b, k)));
    }
}

TEST_CASE("coefficient statistics") {
    TraceRow r;
    r.weights = {1.0, 3.0};
    CHECK(coefficient_mean(r) == 2.0);

    const std::vector<std::vector<double>> flat(5, std::vector{0.5, 1.5});
    CHECK(coefficient_spikiness(flat) == 0.0);
    const std::vector<std::vector<double>> doubling{{1.0, 1.0}, {1.0, 1.0}, {2.0, 2.0}, {2.0, 2.0}};
    CHECK(coefficient_spikiness(doubling) == 1.0);
    CHECK(coefficient_spikiness(std::vector<std::vector<double>>{{1.0}}) == 0.0);
}

TEST_CASE("smaller beta gives a less spiky coefficient trace") {
    SplitMix64 rng(15);
    std::vector<std::vector<double>> stream(300, std::vector<double>(2));
    for (auto& row : stream)
        for (double& v : row) v = std::exp(1.5 * rng.normal());
    auto spikiness = [&](double beta) {
        auto s = EmaState::make(2, beta);
        std::vector<std::vector<double>> rows;
        for (const auto& l : stream) rows.push_back(ema_update(s, LossVector{l, 0}).values);
        return coefficient_spikiness(rows);
    };
    CHECK(spikiness(1.0) > spikiness(0.1));
}

TEST_CASE("Trace") {
    Trace t;
    t.append({10, {1.0, 2.0}, {1.0, 0.5}, {1.0, 1.0}, 0.0, 2.0});
    t.append({20, {0.5, 2.0}, {2.0, 0.5}, {0.5, 1.0}, 0.25, 2.0});
    CHECK(t.size() == 2);
    CHECK_THROWS_AS(t.append({20, {1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}, 0.0, 2.0}), ConfigError);
    CHECK_THROWS_AS(t.append({30, {1.0}, {1.0}, {1.0}, 0.0, 1.0}), ConfigError);
    const auto csv = t.to_csv();
    CHECK(csv.rfind("iteration,loss_0,loss_1,weight_0,weight_1,rate_0,rate_1,rate_std,weighted_total\n", 0) == 0);
    CHECK(csv.find("\n20,0.5,2,2,0.5,0.5,1,0.25,2\n") != std::string::npos);
    // coefficient means 0.75 -> 1.25
    CHECK(coefficient_spikiness(t) == doctest::Approx(0.5 / 0.75).epsilon(1e-15));
}
