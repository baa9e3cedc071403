// Command-line front end: run, compare, sweep, single-task.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lossbal/error.hpp"
#include "lossbal/harness.hpp"
#include "lossbal/keyvalue.hpp"

namespace {

using namespace lossbal;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
}

ExperimentConfig load_config(const std::string& path, const std::string& out_override) {
    auto cfg = ExperimentConfig::parse(read_file(path));
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (cfg.out_dir.empty()) cfg.out_dir = "out";
    return cfg;
}

void print_run(const RunResult& r) {
    std::cout << "composite " << format_double(r.composite) << "  (" << r.wall_seconds << " s)\n";
    for (std::size_t k = 0; k < r.task_names.size(); ++k) {
        std::cout << "  " << r.task_names[k] << "  test_loss " << format_double(r.test_losses[k]) << "  metric "
                  << format_double(r.test_metrics[k]) << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-task loss balancing experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, methods = "baseline,ema", seeds_text = "1..10", param, values_text;
    std::int64_t seed = -1;
    std::size_t task = 0, threads = 0;
    bool no_references = false;

    auto* run = app.add_subcommand("run", "train one configuration");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--out", out_dir, "output directory");

    auto* cmp = app.add_subcommand("compare", "compare balancers across seeds");
    cmp->add_option("--config", config_path, "config file")->required();
    cmp->add_option("--methods", methods, "comma-separated balancer names");
    cmp->add_option("--seeds", seeds_text, "seed range lo..hi or comma list");
    cmp->add_option("--out", out_dir, "output directory");
    cmp->add_option("--threads", threads, "worker threads (0 = all cores)");
    cmp->add_flag("--no-references", no_references, "skip single-task reference runs");

    auto* swp = app.add_subcommand("sweep", "sweep one hyperparameter");
    swp->add_option("--config", config_path, "config file")->required();
    swp->add_option("--param", param, "beta, temperature, alpha or lr")->required();
    swp->add_option("--values", values_text, "comma-separated values")->required();
    swp->add_option("--seeds", seeds_text, "seed range lo..hi or comma list");
    swp->add_option("--out", out_dir, "output directory");
    swp->add_option("--threads", threads, "worker threads (0 = all cores)");
    swp->add_flag("--no-references", no_references, "skip single-task reference runs");

    auto* single = app.add_subcommand("single-task", "train one task alone");
    single->add_option("--config", config_path, "config file")->required();
    single->add_option("--task", task, "task index")->required();
    single->add_option("--seed", seed, "override the config seed");
    single->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    std::string abort_dir;
    try {
        auto cfg = load_config(config_path, out_dir);
        abort_dir = cfg.out_dir;
        const CompareOptions options{!no_references, threads};

        if (*run || *single) {
            if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
            const auto result = *run ? run_experiment(cfg) : run_single_task(cfg, task);
            write_run_outputs(result, cfg.out_dir);
            print_run(result);
        } else if (*cmp) {
            std::vector<NamedConfig> configs;
            for (const auto& m : split(methods, ',')) {
                ExperimentConfig c = cfg;
                c.balancer.method = parse_method(m);
                configs.push_back({m, c});
            }
            const auto seeds = parse_seed_list(seeds_text);
            const auto report = compare(configs, seeds, options);
            write_file(std::filesystem::path(cfg.out_dir) / "comparison.csv", report.to_table());
            write_file(std::filesystem::path(cfg.out_dir) / "comparison_runs.csv", report.runs_table());
            std::cout << report.to_table();
        } else if (*swp) {
            const auto report = sweep(cfg, param, parse_doubles(values_text), parse_seed_list(seeds_text), options);
            write_file(std::filesystem::path(cfg.out_dir) / "sweep.csv", report.to_table());
            std::cout << report.to_table();
        }
    } catch (const NumericalAbort& e) {
        std::cerr << "error: " << e.what() << '\n';
        try {
            write_file(std::filesystem::path(abort_dir.empty() ? "." : abort_dir) / "abort_snapshot.txt", e.snapshot());
        } catch (const std::exception&) {
        }
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
