#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "stochspread/backtest.hpp"
#include "stochspread/cointegration.hpp"
#include "stochspread/error.hpp"
#include "stochspread/estimation.hpp"
#include "stochspread/market_data.hpp"
#include "stochspread/report.hpp"
#include "stochspread/rng.hpp"
#include "stochspread/simulate.hpp"
#include "stochspread/spread_model.hpp"

namespace stochspread {

inline constexpr std::string_view kVersion = "0.1.0";

struct PipelineConfig {
    std::filesystem::path data_path;
    double train_fraction = 0.8;
    std::optional<std::size_t> split_index;
    int max_lag = 10;
    DeConfig de{.bounds = default_spread_bounds()};
    std::size_t min_spread_length = 30;
    CGrid c_grid;
    double risk_free_annual = kDefaultRiskFreeAnnual;
    double exit_epsilon = 1e-4;
    double cost_per_trade = 0.0;
    DrawdownConvention drawdown = DrawdownConvention::points;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 42;
    std::size_t workers = 1;

    MetricOptions metric_options() const {
        return MetricOptions{risk_free_annual, drawdown, cost_per_trade, 1.0};
    }

    ScanOptions scan_options() const {
        return ScanOptions{train_fraction, split_index, max_lag, workers};
    }
};

namespace detail {

inline Interval parse_interval(const std::string& text, const std::string& key) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ConfigError(key + ": expected lo:hi");
    const auto lo = parse_double(trim(std::string_view(text).substr(0, colon)));
    const auto hi = parse_double(trim(std::string_view(text).substr(colon + 1)));
    if (!lo || !hi) throw ConfigError(key + ": expected lo:hi");
    return Interval{*lo, *hi};
}

inline double config_double(const std::string& text, const std::string& key) {
    const auto v = parse_double(text);
    if (!v) throw ConfigError(key + ": not a number: '" + text + "'");
    return *v;
}

inline long long config_int(const std::string& text, const std::string& key) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError(key + ": not an integer: '" + text + "'");
    }
    return v;
}

inline std::uint64_t config_uint(const std::string& text, const std::string& key) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError(key + ": not a non-negative integer: '" + text + "'");
    }
    return v;
}

}  // namespace detail

/// Applies one key=value setting. Unknown keys are an error.
inline void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "data") cfg.data_path = value;
    else if (key == "out") cfg.output_dir = value;
    else if (key == "train_fraction") cfg.train_fraction = config_double(value, key);
    else if (key == "split_index") {
        if (value.empty()) cfg.split_index.reset();
        else cfg.split_index = static_cast<std::size_t>(config_uint(value, key));
    }
    else if (key == "max_lag") cfg.max_lag = static_cast<int>(config_int(value, key));
    else if (key == "seed") cfg.seed = config_uint(value, key);
    else if (key == "workers") cfg.workers = static_cast<std::size_t>(config_uint(value, key));
    else if (key == "risk_free_annual") cfg.risk_free_annual = config_double(value, key);
    else if (key == "exit_epsilon") cfg.exit_epsilon = config_double(value, key);
    else if (key == "cost_per_trade") cfg.cost_per_trade = config_double(value, key);
    else if (key == "min_spread_length")
        cfg.min_spread_length = static_cast<std::size_t>(config_uint(value, key));
    else if (key == "drawdown") {
        if (value == "points") cfg.drawdown = DrawdownConvention::points;
        else if (value == "relative") cfg.drawdown = DrawdownConvention::relative;
        else throw ConfigError("drawdown: expected points or relative");
    }
    else if (key == "de.population") cfg.de.population_size = static_cast<int>(config_int(value, key));
    else if (key == "de.generations") cfg.de.max_generations = static_cast<int>(config_int(value, key));
    else if (key == "de.weight") cfg.de.differential_weight = config_double(value, key);
    else if (key == "de.crossover") cfg.de.crossover_rate = config_double(value, key);
    else if (key == "de.tolerance") cfg.de.tolerance = config_double(value, key);
    else if (key == "de.stall") cfg.de.stall_generations = static_cast<int>(config_int(value, key));
    else if (key == "de.bounds.x") cfg.de.bounds.at(0) = parse_interval(value, key);
    else if (key == "de.bounds.y") cfg.de.bounds.at(1) = parse_interval(value, key);
    else if (key == "de.bounds.z") cfg.de.bounds.at(2) = parse_interval(value, key);
    else if (key == "de.bounds.v") cfg.de.bounds.at(3) = parse_interval(value, key);
    else if (key == "c_grid.min") cfg.c_grid.min = config_double(value, key);
    else if (key == "c_grid.max") cfg.c_grid.max = config_double(value, key);
    else if (key == "c_grid.count") cfg.c_grid.count = static_cast<int>(config_int(value, key));
    else if (key == "c_grid.spacing") {
        if (value == "log") cfg.c_grid.spacing = GridSpacing::log;
        else if (value == "linear") cfg.c_grid.spacing = GridSpacing::linear;
        else throw ConfigError("c_grid.spacing: expected log or linear");
    }
    else throw ConfigError("unknown configuration key '" + key + "'");
}

/// Flat `key = value` lines; `#` starts a comment.
inline void read_config(std::istream& in, PipelineConfig& cfg) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto text = detail::trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        apply_setting(cfg, std::string(detail::trim(text.substr(0, eq))),
                      std::string(detail::trim(text.substr(eq + 1))));
    }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    PipelineConfig cfg;
    read_config(in, cfg);
    return cfg;
}

/// Complete settings snapshot, readable back by read_config.
inline void write_config(std::ostream& out, const PipelineConfig& cfg) {
    const auto interval = [](const Interval& i) {
        return format_exact(i.lo) + ":" + format_exact(i.hi);
    };
    out << "data = " << cfg.data_path.string() << '\n'
        << "out = " << cfg.output_dir.string() << '\n'
        << "train_fraction = " << format_exact(cfg.train_fraction) << '\n'
        << "split_index = " << (cfg.split_index ? std::to_string(*cfg.split_index) : "") << '\n'
        << "max_lag = " << cfg.max_lag << '\n'
        << "seed = " << cfg.seed << '\n'
        << "workers = " << cfg.workers << '\n'
        << "risk_free_annual = " << format_exact(cfg.risk_free_annual) << '\n'
        << "exit_epsilon = " << format_exact(cfg.exit_epsilon) << '\n'
        << "cost_per_trade = " << format_exact(cfg.cost_per_trade) << '\n'
        << "drawdown = " << (cfg.drawdown == DrawdownConvention::points ? "points" : "relative") << '\n'
        << "min_spread_length = " << cfg.min_spread_length << '\n'
        << "de.population = " << cfg.de.population_size << '\n'
        << "de.generations = " << cfg.de.max_generations << '\n'
        << "de.weight = " << format_exact(cfg.de.differential_weight) << '\n'
        << "de.crossover = " << format_exact(cfg.de.crossover_rate) << '\n'
        << "de.tolerance = " << format_exact(cfg.de.tolerance) << '\n'
        << "de.stall = " << cfg.de.stall_generations << '\n'
        << "de.bounds.x = " << interval(cfg.de.bounds.at(0)) << '\n'
        << "de.bounds.y = " << interval(cfg.de.bounds.at(1)) << '\n'
        << "de.bounds.z = " << interval(cfg.de.bounds.at(2)) << '\n'
        << "de.bounds.v = " << interval(cfg.de.bounds.at(3)) << '\n'
        << "c_grid.min = " << format_exact(cfg.c_grid.min) << '\n'
        << "c_grid.max = " << format_exact(cfg.c_grid.max) << '\n'
        << "c_grid.count = " << cfg.c_grid.count << '\n'
        << "c_grid.spacing = " << (cfg.c_grid.spacing == GridSpacing::log ? "log" : "linear") << '\n';
}

/// DE seed for one pair: SplitMix64 finalizer of (config seed XOR FNV-1a(pair id)).
/// Independent of which other pairs are processed or in what order.
inline std::uint64_t pair_seed(std::uint64_t seed, std::string_view pair_id) {
    return Rng::mix(seed ^ stable_hash(pair_id));
}

/// Output file locations inside the output directory.
struct OutputLayout {
    std::filesystem::path dir;

    std::filesystem::path scan() const { return dir / "scan.csv"; }
    std::filesystem::path manifest() const { return dir / "manifest.txt"; }
    std::filesystem::path fit(const std::string& pair) const { return dir / ("fit_" + pair + ".csv"); }
    std::filesystem::path states(const std::string& pair) const {
        return dir / ("states_" + pair + ".csv");
    }
    std::filesystem::path metrics(const std::string& pair, const std::string& segment) const {
        return dir / ("metrics_" + pair + "_" + segment + ".csv");
    }
    std::filesystem::path equity_csv(const std::string& pair, const std::string& segment) const {
        return dir / ("equity_" + pair + "_" + segment + ".csv");
    }
    std::filesystem::path equity_svg(const std::string& pair, const std::string& segment) const {
        return dir / ("equity_" + pair + "_" + segment + ".svg");
    }
    std::filesystem::path table(const std::string& segment) const {
        return dir / ("backtest_" + segment + ".csv");
    }
};

/// Accepts "A__B" or "A,B".
inline std::string normalize_pair_id(std::string id) {
    if (const auto comma = id.find(','); comma != std::string::npos) {
        return id.substr(0, comma) + "__" + id.substr(comma + 1);
    }
    return id;
}

class Pipeline {
public:
    Pipeline(PipelineConfig config, std::ostream& log, std::ostream& warn)
        : cfg_(std::move(config)), out_{cfg_.output_dir}, log_(log), warn_(warn) {}

    const PipelineConfig& config() const { return cfg_; }
    const OutputLayout& layout() const { return out_; }

    void write_manifest(std::string_view command) const {
        std::filesystem::create_directories(out_.dir);
        auto out = detail::open_out(out_.manifest());
        out << "# stochspread " << kVersion << '\n' << "# command: " << command << '\n';
        write_config(out, cfg_);
    }

    /// Loads, aligns and gap-fills the configured data file.
    const std::vector<PriceSeries>& universe() {
        if (!universe_) {
            if (cfg_.data_path.empty()) throw ConfigError("no data file configured");
            const auto raw = load_csv(cfg_.data_path);
            universe_ = align(raw);
        }
        return *universe_;
    }

    ScanReport scan() {
        std::filesystem::create_directories(out_.dir);
        ScanReport report = scan_pairs(universe(), cfg_.scan_options());
        {
            auto out = detail::open_out(out_.scan());
            write_scan_csv(out, report);
        }
        for (const auto& e : report.entries) {
            if (e.failed()) {
                warn_ << "warning: pair " << e.pair_id() << " failed: " << e.error << '\n';
            } else if (e.cointegrated()) {
                log_ << e.id_a << ',' << e.id_b << " hedge_ratio=" << format_fixed(*e.result->hedge_ratio, 4)
                     << '\n';
            }
        }
        log_ << report.cointegrated().size() << " cointegrated of " << report.pairs_tested()
             << " pairs tested\n";
        scan_ = report;
        return report;
    }

    /// Scan results from memory, scan.csv, or a fresh scan, in that order.
    const ScanReport& scan_results() {
        if (!scan_) {
            if (std::filesystem::exists(out_.scan())) {
                auto in = detail::open_in(out_.scan());
                scan_ = read_scan_csv(in);
            } else {
                scan();
            }
        }
        return *scan_;
    }

    const ScanEntry& find_pair(const std::string& pair_id) {
        const std::string id = normalize_pair_id(pair_id);
        for (const auto& e : scan_results().entries) {
            if (e.pair_id() == id) {
                if (!e.cointegrated()) throw Error("pair " + id + " is not cointegrated");
                return e;
            }
        }
        throw Error("unknown pair " + id);
    }

    PairDataset pair_dataset(const ScanEntry& entry) {
        const auto& u = universe();
        const auto by_id = [&](const std::string& id) -> const PriceSeries& {
            for (const auto& s : u) {
                if (s.commodity_id == id) return s;
            }
            throw Error("commodity " + id + " not present in data file");
        };
        const PriceSeries& a = by_id(entry.id_a);
        const PriceSeries& b = by_id(entry.id_b);
        return split_at(a, b, resolve_split_index(a.size(), cfg_.scan_options()));
    }

    FitRecord fit(const std::string& pair_id) {
        const ScanEntry entry = find_pair(pair_id);
        const PairDataset pair = pair_dataset(entry);
        const double hedge = *entry.result->hedge_ratio;
        const SpreadSeries train =
            slice(build_spread(pair, hedge), 0, pair.split_index);

        DeConfig de = cfg_.de;
        de.seed = pair_seed(cfg_.seed, entry.pair_id());
        de.workers = 1;
        FitRecord rec{entry.pair_id(), hedge, de.seed,
                      fit_spread_model(train, de, FitOptions{cfg_.min_spread_length})};
        if (rec.fit.degenerate) {
            warn_ << "warning: degenerate likelihood for " << rec.pair_id
                  << " (Z and V at their lower bounds or constant spread)\n";
        }
        std::filesystem::create_directories(out_.dir);
        {
            auto out = detail::open_out(out_.fit(rec.pair_id));
            write_fit_report(out, rec);
        }
        {
            auto out = detail::open_out(out_.states(rec.pair_id));
            write_state_csv(out, train, kalman_filter(train, rec.fit.best_params));
        }
        log_ << rec.pair_id << ": kappa=" << format_fixed(rec.fit.ou_params.kappa, 6)
             << " mu=" << format_fixed(rec.fit.ou_params.mu, 6)
             << " sigma=" << format_fixed(rec.fit.ou_params.sigma, 6)
             << " V=" << format_fixed(rec.fit.best_params.v, 6)
             << " loglik=" << format_fixed(rec.fit.log_likelihood, 4) << '\n';
        return rec;
    }

    /// Fit from fit_<pair>.csv when present, otherwise computed now.
    FitRecord fit_or_load(const std::string& pair_id) {
        const std::string id = normalize_pair_id(pair_id);
        if (std::filesystem::exists(out_.fit(id))) {
            auto in = detail::open_in(out_.fit(id));
            return read_fit_report(in);
        }
        return fit(id);
    }

    struct PairBacktest {
        std::string pair_id;
        MetricsRow train;
        std::optional<MetricsRow> test;
        bool no_trades = false;
    };

    PairBacktest backtest_pair(const std::string& pair_id) {
        const ScanEntry entry = find_pair(pair_id);
        const std::string id = entry.pair_id();
        const PairDataset pair = pair_dataset(entry);
        const FitRecord rec = fit_or_load(id);
        const MetricOptions metric_opts = cfg_.metric_options();

        const SpreadSeries train =
            slice(build_spread(pair, *entry.result->hedge_ratio), 0, pair.split_index);
        const std::vector<double> grid = cfg_.c_grid.values();
        PairBacktest result{id, {}, std::nullopt, false};
        double c = 0.0;
        try {
            c = optimize_c(train, rec.fit.ou_params, grid, metric_opts, cfg_.exit_epsilon).c;
        } catch (const NoTradeError&) {
            // Smallest candidate has the narrowest band; if it never trades none do.
            c = *std::min_element(grid.begin(), grid.end());
            result.no_trades = true;
            warn_ << "warning: " << id << " produced no trades for any c on the training segment\n";
        }

        const PairEvaluation eval =
            evaluate_pair(pair, *entry.result, rec.fit, c, metric_opts, cfg_.exit_epsilon);
        result.train = MetricsRow::from(entry.id_a, entry.id_b, eval.train);
        write_segment(id, "train", result.train, eval.train_spread, eval.train);
        if (eval.test) {
            result.test = MetricsRow::from(entry.id_a, entry.id_b, *eval.test);
            write_segment(id, "test", *result.test, eval.test_spread, *eval.test);
        } else {
            warn_ << "warning: " << id << " has no testing segment to evaluate\n";
        }
        log_ << id << ": c=" << format_fixed(c, 4) << " in-sample SR="
             << (result.train.sharpe ? format_fixed(*result.train.sharpe, 2) : std::string("-"))
             << " out-of-sample SR="
             << (result.test && result.test->sharpe ? format_fixed(*result.test->sharpe, 2)
                                                    : std::string("-"))
             << '\n';
        return result;
    }

    /// Backtests one pair, or every cointegrated pair when pair_id is empty,
    /// then writes the combined tables.
    std::vector<PairBacktest> backtest(const std::string& pair_id = {}) {
        std::vector<std::string> ids;
        if (!pair_id.empty()) {
            ids.push_back(normalize_pair_id(pair_id));
        } else {
            for (const auto& e : scan_results().cointegrated()) ids.push_back(e.pair_id());
        }
        universe();
        scan_results();
        std::vector<PairBacktest> results(ids.size());
        std::vector<std::ostringstream> logs(ids.size());
        std::vector<std::ostringstream> warns(ids.size());
        // Workers share read-only copies of the caches and write per-pair files.
        detail::parallel_for(ids.size(), cfg_.workers, [&](std::size_t i) {
            Pipeline worker(cfg_, logs[i], warns[i]);
            worker.universe_ = universe_;
            worker.scan_ = scan_;
            results[i] = worker.backtest_pair(ids[i]);
        });
        for (std::size_t i = 0; i < ids.size(); ++i) {
            log_ << logs[i].str();
            warn_ << warns[i].str();
        }
        write_tables_from_disk(ids);
        return results;
    }

    struct ReportSummary {
        std::size_t train_rows = 0;
        std::size_t test_rows = 0;
        std::vector<std::string> missing;
    };

    /// Combines per-pair metric rows for every cointegrated pair in scan.csv
    /// into backtest_train.csv and backtest_test.csv. Missing per-pair outputs
    /// are reported as warnings; the partial tables are still written.
    ReportSummary report() {
        std::vector<std::string> ids;
        if (std::filesystem::exists(out_.scan()) || scan_) {
            for (const auto& e : scan_results().cointegrated()) ids.push_back(e.pair_id());
        } else {
            warn_ << "warning: no scan.csv in " << out_.dir.string()
                  << "; reporting on the metrics files present\n";
            ids = pairs_with_metrics();
        }
        ReportSummary summary;
        for (const std::string segment : {"train", "test"}) {
            std::vector<MetricsRow> rows;
            for (const auto& id : ids) {
                const auto path = out_.metrics(id, segment);
                if (!std::filesystem::exists(path)) {
                    summary.missing.push_back(id + " (" + segment + ")");
                    warn_ << "warning: missing " << segment << " results for pair " << id << '\n';
                    continue;
                }
                auto in = detail::open_in(path);
                rows.push_back(read_metrics_row(in));
            }
            std::filesystem::create_directories(out_.dir);
            auto out = detail::open_out(out_.table(segment));
            write_results_table(out, rows);
            (segment == std::string("train") ? summary.train_rows : summary.test_rows) = rows.size();
        }
        log_ << "report: " << summary.train_rows << " train rows, " << summary.test_rows
             << " test rows\n";
        return summary;
    }

private:
    void write_segment(const std::string& id, const std::string& segment, const MetricsRow& row,
                       const SpreadSeries& spread, const BacktestReport& report) const {
        std::filesystem::create_directories(out_.dir);
        {
            auto out = detail::open_out(out_.metrics(id, segment));
            write_metrics_row(out, row);
        }
        {
            auto out = detail::open_out(out_.equity_csv(id, segment));
            write_equity_csv(out, spread.dates, report.metrics.equity_curve);
        }
        {
            auto out = detail::open_out(out_.equity_svg(id, segment));
            write_equity_svg(out, spread.dates, report.metrics.equity_curve,
                             id + " cumulative return (" + segment + ")");
        }
    }

    void write_tables_from_disk(const std::vector<std::string>& ids) const {
        for (const std::string segment : {"train", "test"}) {
            std::vector<MetricsRow> rows;
            for (const auto& id : ids) {
                const auto path = out_.metrics(id, segment);
                if (!std::filesystem::exists(path)) continue;
                auto in = detail::open_in(path);
                rows.push_back(read_metrics_row(in));
            }
            auto out = detail::open_out(out_.table(segment));
            write_results_table(out, rows);
        }
    }

    std::vector<std::string> pairs_with_metrics() const {
        std::vector<std::string> ids;
        if (!std::filesystem::exists(out_.dir)) return ids;
        const std::string prefix = "metrics_", suffix = "_train.csv";
        for (const auto& entry : std::filesystem::directory_iterator(out_.dir)) {
            const std::string name = entry.path().filename().string();
            if (name.size() > prefix.size() + suffix.size() && name.starts_with(prefix) &&
                name.ends_with(suffix)) {
                ids.push_back(name.substr(prefix.size(), name.size() - prefix.size() - suffix.size()));
            }
        }
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    PipelineConfig cfg_;
    OutputLayout out_;
    std::ostream& log_;
    std::ostream& warn_;
    std::optional<std::vector<PriceSeries>> universe_;
    std::optional<ScanReport> scan_;
};

struct SimulateOptions {
    std::size_t cointegrated_pairs = 3;
    std::size_t independent_series = 11;
    std::size_t length = 2347;
    OUParams ou{0.1, 0.5, 0.02, 0.0};
    double beta = 0.7;
    double walk_volatility = 0.015;
    double initial_level = 4.6;
    std::uint64_t seed = 42;
};

/// Synthetic universe: `cointegrated_pairs` constructed pairs (P1A/P1B, ...)
/// followed by independent random walks (RW1, ...), all on one business-day
/// calendar. Each item draws from its own seed derived from the root seed.
inline std::vector<PriceSeries> simulate_universe(const SimulateOptions& opts) {
    std::vector<PriceSeries> out;
    for (std::size_t k = 0; k < opts.cointegrated_pairs; ++k) {
        SimSpec spec;
        spec.ou = opts.ou;
        spec.length = opts.length;
        spec.seed = Rng::mix(opts.seed ^ stable_hash("pair" + std::to_string(k + 1)));
        spec.initial_state = opts.ou.mu;
        spec.beta = opts.beta;
        spec.walk_volatility = opts.walk_volatility;
        spec.initial_level = opts.initial_level;
        const std::string tag = "P" + std::to_string(k + 1);
        auto pair = simulate_cointegrated_pair(spec, tag + "A", tag + "B");
        out.push_back(std::move(pair.series_a));
        out.push_back(std::move(pair.series_b));
    }
    for (std::size_t k = 0; k < opts.independent_series; ++k) {
        const std::string id = "RW" + std::to_string(k + 1);
        out.push_back(simulate_random_walk(id, opts.length, opts.walk_volatility,
                                           Rng::mix(opts.seed ^ stable_hash(id)),
                                           opts.initial_level));
    }
    return out;
}

inline void write_simulated_csv(const std::filesystem::path& path, const SimulateOptions& opts) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto out = detail::open_out(path);
    write_price_csv(out, simulate_universe(opts));
}

}  // namespace stochspread
