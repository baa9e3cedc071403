#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "lossbal/error.hpp"
#include "lossbal/harness.hpp"

using namespace lossbal;

namespace {

ExperimentConfig small_config(std::string_view extra = "") {
    std::string text = "task = a binary-bce 1 1\n"
                       "task = b binary-bce 1 1\n"
                       "task = c regression-mse 1 5\n"
                       "input_dim = 6\n"
                       "samples = 300\n"
                       "trunk = 16\n"
                       "head_hidden = 8\n"
                       "iterations = 60\n"
                       "batch_size = 16\n"
                       "log_every = 10\n";
    text += extra;
    return ExperimentConfig::parse(text);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_CASE("config parsing") {
    SUBCASE("defaults come from the scenario") {
        const auto c = ExperimentConfig::parse("scenario = celeb-mini\n");
        CHECK(c.tasks.size() == 8);
        CHECK(c.balancer.method == Method::baseline);
        CHECK(c.balancer.beta == 0.1);
        CHECK(c.balancer.temperature == 0.5);
        CHECK(c.balancer.alpha == 1.5);
        CHECK(c.lr == 1e-3);
        CHECK(c.batch_size == 64);
        CHECK(c.iterations == 2000);
        CHECK(c.log_every == 10);
        CHECK(c.network.trunk_units == std::vector<std::size_t>{64, 64});
        CHECK(c.network.head_hidden == std::vector<std::size_t>{32});
    }
    SUBCASE("echo round trip") {
        const auto c = small_config("balancer = dwema\nbeta = 0.25\ntemperature = 2\ndwema_scaling = multiply\n"
                                    "optimizer = sgd\nlr = 0.05\nseed = 42\nrelatedness = 0.3\n");
        CHECK(c.balancer.method == Method::dwema);
        CHECK(c.balancer.dwema_scaling == DwemaScaling::multiply);
        CHECK(c.optimizer == OptimizerKind::sgd);
        CHECK(c.seed == 42);
        const auto again = ExperimentConfig::parse(c.echo());
        CHECK(again.echo() == c.echo());
        CHECK(again.tasks == c.tasks);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(ExperimentConfig::parse("scenario = celeb-mini\nbogus = 1\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("scenario = celeb-mini\nbalancer = magic\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("scenario = celeb-mini\nbeta = 2\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("scenario = celeb-mini\nbatch_size = 0\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("scenario = custom\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("task = a binary-bce 1\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("task = a binary-bce 1 1\ntask = a binary-bce 1 1\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("scenario = nowhere\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("scenario = va-mini\ntask = a binary-bce 1 1\n"), ConfigError);
        CHECK(ExperimentConfig::parse("task = a binary-bce 1 1\n").scenario == "custom");
        CHECK_THROWS_AS(ExperimentConfig::parse("scenario = celeb-mini\niterations = -3\n"), ConfigError);
    }
}

TEST_CASE("composite_for groups tasks by kind") {
    const auto va = scenario_by_name("va-mini");
    const auto cfg = composite_for(va.specs);
    CHECK(cfg.groups.size() == 2);
}

TEST_CASE("run_experiment basics") {
    const auto c = small_config("balancer = ema\n");
    const auto r = run_experiment(c);
    CHECK(r.trace.size() == c.iterations / c.log_every);
    CHECK(r.trace.rows().front().iteration == 9); // 0-based step index
    CHECK(r.trace.rows().back().iteration == 59);
    CHECK(r.test_losses.size() == 3);
    CHECK(r.test_metrics.size() == 3);
    CHECK(r.task_names == std::vector<std::string>{"a", "b", "c"});
    CHECK(r.first_losses.size() == 3);

    SUBCASE("bitwise reproducible") {
        const auto again = run_experiment(c);
        CHECK(again.to_json() == r.to_json());
        CHECK(again.trace.to_csv() == r.trace.to_csv());
        CHECK(again.test_losses == r.test_losses);
    }
    SUBCASE("different seeds differ") {
        auto other = c;
        other.seed = 2;
        CHECK(run_experiment(other).to_json() != r.to_json());
    }
}

TEST_CASE("zero iterations evaluate the initial model") {
    const auto c = small_config("iterations = 0\n");
    const auto r = run_experiment(c);
    CHECK(r.trace.empty());
    CHECK(r.test_losses.size() == 3);
    for (double l : r.test_losses) CHECK(std::isfinite(l));
}

TEST_CASE("all methods see the same first losses") {
    const std::vector<double> first = run_experiment(small_config("iterations = 1\n")).first_losses;
    for (const char* m : {"ema", "rema", "dwema", "dwa", "uw", "gradnorm"}) {
        CAPTURE(m);
        const auto r = run_experiment(small_config(std::string("iterations = 1\nbalancer = ") + m + "\n"));
        CHECK(r.first_losses == first);
    }
}

TEST_CASE("every balancer trains end to end") {
    for (const char* m : {"baseline", "ema", "rema", "dwema", "dwa", "uw", "gradnorm"}) {
        CAPTURE(m);
        const auto r = run_experiment(small_config(std::string("balancer = ") + m + "\n"));
        for (double l : r.test_losses) CHECK(std::isfinite(l));
        for (const auto& row : r.trace.rows()) {
            for (double w : row.weights) CHECK(std::isfinite(w));
            CHECK(row.rate_std >= 0.0);
        }
    }
}

TEST_CASE("symmetric baseline tasks end with comparable losses") {
    const auto c = ExperimentConfig::parse("task = a binary-bce 1 1\ntask = b binary-bce 1 1\n"
                                           "task = c binary-bce 1 1\ntask = d binary-bce 1 1\n"
                                           "samples = 2000\niterations = 400\n");
    const auto r = run_experiment(c);
    const auto [lo, hi] = std::minmax_element(r.test_losses.begin(), r.test_losses.end());
    CHECK(*hi <= 2.0 * *lo);
}

TEST_CASE("single-task run on a one-task problem equals the baseline run") {
    const auto c = ExperimentConfig::parse("task = only regression-mse 1 3\ninput_dim = 5\nsamples = 200\n"
                                           "iterations = 50\nbatch_size = 8\ntrunk = 8\nhead_hidden = 4\n");
    const auto a = run_experiment(c);
    const auto b = run_single_task(c, 0);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.trace == b.trace);
    CHECK(run_single_task(c, 0).to_json() == b.to_json());
    CHECK_THROWS_AS(run_single_task(c, 1), ConfigError);
}

TEST_CASE("EMA on constant equal losses reduces the weighted total to K") {
    // Frozen parameters: re-evaluating one fixed batch keeps every loss constant.
    const auto c = small_config();
    const auto data = generate_mtl(c.seed, c.input_dim, c.samples, c.tasks, c.relatedness);
    const auto params = init_params(c.input_dim, c.network, c.tasks, c.seed);
    const std::vector<std::size_t> rows(data.train.begin(), data.train.begin() + 16);
    const auto batch = make_batch(data, rows);
    BalancerSettings st;
    st.method = Method::ema;
    st.beta = 0.3;
    auto bal = make_balancer(st, c.tasks.size());
    double total = 0.0;
    for (int t = 0; t < 100; ++t) {
        const TapedForward tape(params, batch, c.tasks);
        const auto w = bal->update(tape.losses());
        total = combine(w, tape.losses());
    }
    CHECK(total == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("numerical abort carries the iteration and balancer state") {
    const auto c = small_config("balancer = uw\nuw_lr = 1e300\n");
    try {
        run_experiment(c);
        FAIL("expected NumericalAbort");
    } catch (const NumericalAbort& e) {
        CHECK(e.iteration() < c.iterations);
        CHECK(e.snapshot().find("method = uw") != std::string::npos);
        CHECK_NOTHROW(restore_balancer(e.snapshot()));
    }
}

TEST_CASE("write_run_outputs") {
    const auto dir = std::filesystem::temp_directory_path() / "lossbal_test_outputs";
    std::filesystem::remove_all(dir);
    const auto r = run_experiment(small_config());
    write_run_outputs(r, dir.string());
    CHECK(slurp(dir / "trace.csv") == r.trace.to_csv());
    CHECK(slurp(dir / "result.json") == r.to_json());
    CHECK(ExperimentConfig::parse(slurp(dir / "config.echo")).echo() == r.config.echo());
    std::filesystem::remove_all(dir);
}

TEST_CASE("compare") {
    const auto base = small_config();
    auto ema = base;
    ema.balancer.method = Method::ema;
    const std::vector<std::uint64_t> seeds{1, 2};

    SUBCASE("one config, one seed equals run_experiment") {
        const std::vector<NamedConfig> cfgs{{"baseline", base}};
        const std::vector<std::uint64_t> one{1};
        const auto rep = compare(cfgs, one, {false, 1});
        REQUIRE(rep.records[0][0].result);
        const auto direct = run_experiment(base);
        CHECK(rep.records[0][0].result->to_json() == direct.to_json());
        CHECK(rep.summary[0].composite_mean == direct.composite);
        CHECK(rep.summary[0].composite_std == 0.0);
        CHECK(rep.summary[0].wins == 1);
    }
    SUBCASE("identical configs under different names have identical statistics") {
        const std::vector<NamedConfig> cfgs{{"x", ema}, {"y", ema}};
        const auto rep = compare(cfgs, seeds, {true, 2});
        CHECK(rep.has_references);
        const auto& a = rep.summary[0];
        const auto& b = rep.summary[1];
        CHECK(a.composite_mean == b.composite_mean);
        CHECK(a.spread_median == b.spread_median);
        CHECK(a.dominated_loss_median == b.dominated_loss_median);
        CHECK(a.loss_mean == b.loss_mean);
        CHECK(a.wins == 2);
        CHECK(b.wins == 2);
        for (const auto& rec : rep.records[0]) {
            CHECK(rec.normalized_losses.size() == 3);
            CHECK(rec.spread >= 1.0);
        }
    }
    SUBCASE("table contains the spread statistic and is thread-count independent") {
        const std::vector<NamedConfig> cfgs{{"baseline", base}, {"ema", ema}};
        const auto one = compare(cfgs, seeds, {true, 1});
        const auto many = compare(cfgs, seeds, {true, 4});
        CHECK(one.to_table() == many.to_table());
        CHECK(one.runs_table() == many.runs_table());
        CHECK(one.to_table().rfind("method,runs,failed,composite_mean,composite_std,wins,spread_median,"
                                   "dominated_loss_median,spikiness_mean,",
                                   0) == 0);
    }
    SUBCASE("configs must differ only in balancer settings") {
        auto other = base;
        other.lr = 0.01;
        const std::vector<NamedConfig> cfgs{{"a", base}, {"b", other}};
        CHECK_THROWS_AS(compare(cfgs, seeds), ConfigError);
    }
    SUBCASE("failed runs are recorded and the rest proceed") {
        auto bad = base;
        bad.balancer.method = Method::uw;
        bad.balancer.uw_learning_rate = 1e300;
        const std::vector<NamedConfig> cfgs{{"baseline", base}, {"bad", bad}};
        const auto rep = compare(cfgs, seeds, {false, 2});
        CHECK(rep.summary[0].failed == 0);
        CHECK(rep.summary[1].failed == 2);
        CHECK_FALSE(rep.records[1][0].result);
        CHECK_FALSE(rep.records[1][0].error.empty());
        CHECK(rep.summary[0].wins == 2);
        CHECK(rep.runs_table().find("bad,1,failed") != std::string::npos);
    }
}

TEST_CASE("sweep") {
    auto c = small_config("balancer = ema\n");
    const std::vector<std::uint64_t> seeds{1};
    SUBCASE("single value equals compare") {
        const std::vector<double> values{0.25};
        const auto s = sweep(c, "beta", values, seeds, {false, 1});
        auto tuned = c;
        tuned.balancer.beta = 0.25;
        const std::vector<NamedConfig> cfgs{{"ema", tuned}};
        CHECK(s.cells.size() == 1);
        CHECK(s.cells[0].to_table() == compare(cfgs, seeds, {false, 1}).to_table());
    }
    SUBCASE("grid shape") {
        const std::vector<double> values{0.5, 0.2, 0.1};
        const auto s = sweep(c, "beta", values, seeds, {false, 2});
        CHECK(s.cells.size() == 3);
        const auto table = s.to_table();
        CHECK(table.rfind("parameter,value,method,", 0) == 0);
        CHECK(std::count(table.begin(), table.end(), '\n') == 4);
    }
    SUBCASE("unknown parameter") {
        const std::vector<double> values{1.0};
        CHECK_THROWS_AS(sweep(c, "momentum", values, seeds), ConfigError);
    }
}

TEST_CASE("parse_seed_list") {
    CHECK(parse_seed_list("1..4") == std::vector<std::uint64_t>{1, 2, 3, 4});
    CHECK(parse_seed_list("3,5,8") == std::vector<std::uint64_t>{3, 5, 8});
    CHECK(parse_seed_list("7") == std::vector<std::uint64_t>{7});
    CHECK_THROWS_AS(parse_seed_list("5..2"), ConfigError);
    CHECK_THROWS_AS(parse_seed_list("a,b"), ConfigError);
    CHECK_THROWS_AS(parse_seed_list(""), ConfigError);
}
