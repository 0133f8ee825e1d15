// Command-line driver: scan, fit, backtest, report, simulate.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stochspread/pipeline.hpp"

namespace {

using namespace stochspread;

struct GlobalFlags {
    std::string config_path;
    std::string data;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::size_t> split_index;
    std::optional<double> train_fraction;
};

PipelineConfig resolve_config(const GlobalFlags& flags) {
    PipelineConfig cfg = flags.config_path.empty() ? PipelineConfig{} : load_config(flags.config_path);
    if (!flags.data.empty()) cfg.data_path = flags.data;
    if (!flags.out.empty()) cfg.output_dir = flags.out;
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.workers) cfg.workers = *flags.workers;
    if (flags.split_index) cfg.split_index = *flags.split_index;
    if (flags.train_fraction) cfg.train_fraction = *flags.train_fraction;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cointegration scan, stochastic spread fitting and pairs-trading backtests"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    GlobalFlags flags;
    app.add_option("--config", flags.config_path, "Flat key = value configuration file");
    app.add_option("--data", flags.data, "Price CSV (date column plus one column per commodity)");
    app.add_option("--out", flags.out, "Output directory");
    app.add_option("--seed", flags.seed, "Root seed for all randomness");
    app.add_option("--workers", flags.workers, "Concurrent pair workers")->check(CLI::PositiveNumber);
    app.add_option("--split-index", flags.split_index, "Explicit training length (overrides --train-fraction)");
    app.add_option("--train-fraction", flags.train_fraction, "Training share of observations")
        ->check(CLI::Range(0.0, 1.0));

    auto* scan = app.add_subcommand("scan", "Johansen test over all commodity pairs")->fallthrough();

    std::string fit_pair;
    auto* fit = app.add_subcommand("fit", "Fit the stochastic spread model for one pair")->fallthrough();
    fit->add_option("--pair", fit_pair, "Pair id, A__B or A,B")->required();

    std::string bt_pair;
    auto* bt = app.add_subcommand("backtest", "Optimise c in-sample and backtest both segments")
                   ->fallthrough();
    bt->add_option("--pair", bt_pair, "Pair id; all cointegrated pairs when omitted");

    auto* report = app.add_subcommand("report", "Combine per-pair results into summary tables")
                       ->fallthrough();

    SimulateOptions sim;
    std::string sim_path;
    auto* simulate = app.add_subcommand("simulate", "Write a synthetic universe in the price CSV schema")
                         ->fallthrough();
    simulate->add_option("--pairs", sim.cointegrated_pairs, "Constructed cointegrated pairs");
    simulate->add_option("--singles", sim.independent_series, "Independent random walks");
    simulate->add_option("--length", sim.length, "Observations per series")->check(CLI::Range(2, 10000000));
    simulate->add_option("--kappa", sim.ou.kappa, "Spread mean-reversion speed per day");
    simulate->add_option("--mu", sim.ou.mu, "Spread long-run mean");
    simulate->add_option("--sigma", sim.ou.sigma, "Spread state noise");
    simulate->add_option("--v", sim.ou.v, "Spread measurement noise");
    simulate->add_option("--beta", sim.beta, "Cointegration coefficient");
    simulate->add_option("--walk-vol", sim.walk_volatility, "Daily log-price volatility of the common factor");
    simulate->add_option("--output", sim_path, "CSV path (defaults to --data, else <out>/simulated.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg = resolve_config(flags);
        if (simulate->parsed()) {
            if (flags.seed) sim.seed = *flags.seed;
            else sim.seed = cfg.seed;
            std::filesystem::path path = sim_path;
            if (path.empty()) path = cfg.data_path.empty() ? cfg.output_dir / "simulated.csv" : cfg.data_path;
            write_simulated_csv(path, sim);
            std::cout << "wrote " << path.string() << '\n';
            return 0;
        }

        Pipeline pipeline(cfg, std::cout, std::cerr);
        if (scan->parsed()) {
            pipeline.write_manifest("scan");
            pipeline.scan();
        } else if (fit->parsed()) {
            pipeline.write_manifest("fit --pair " + normalize_pair_id(fit_pair));
            pipeline.fit(fit_pair);
        } else if (bt->parsed()) {
            pipeline.write_manifest(bt_pair.empty() ? "backtest"
                                                    : "backtest --pair " + normalize_pair_id(bt_pair));
            pipeline.backtest(bt_pair);
        } else if (report->parsed()) {
            pipeline.write_manifest("report");
            pipeline.report();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
