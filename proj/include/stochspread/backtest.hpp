#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stochspread/cointegration.hpp"
#include "stochspread/error.hpp"
#include "stochspread/estimation.hpp"
#include "stochspread/market_data.hpp"
#include "stochspread/spread_model.hpp"

namespace stochspread {

inline constexpr double kDefaultRiskFreeAnnual = 0.074;
inline constexpr double kTradingDaysPerYear = 252.0;

/// Threshold rule around the OU mean. Entry band half-width is
/// c * sigma / sqrt(2 kappa):
///   short when s >= mu + band, long when s <= mu - band,
///   exit short when s <= mu + eps * s, exit long when s >= mu - eps * s.
/// The exit boundary scales with the spread's own level, so for s < 0 it sits
/// on the other side of mu than for s > 0.
struct TradingRule {
    double c = 0.0;
    double exit_epsilon = 1e-4;
    double mu = 0.0;
    double kappa = 0.0;
    double sigma = 0.0;

    double band() const { return c * sigma / std::sqrt(2.0 * kappa); }

    bool short_entry(double s) const { return s >= mu + band(); }
    bool long_entry(double s) const { return s <= mu - band(); }
    bool short_exit(double s) const { return s <= mu + exit_epsilon * s; }
    bool long_exit(double s) const { return s >= mu - exit_epsilon * s; }

    void validate() const {
        if (!std::isfinite(c) || c < 0.0) throw DomainError("c must be finite and >= 0");
        if (!std::isfinite(exit_epsilon)) throw DomainError("exit epsilon must be finite");
        if (!std::isfinite(mu)) throw DomainError("mu must be finite");
        if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("kappa must be > 0");
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("sigma must be >= 0");
        if (!std::isfinite(band())) throw DomainError("entry band is not finite");
    }

    static TradingRule from(const OUParams& ou, double c, double exit_epsilon = 1e-4) {
        return TradingRule{c, exit_epsilon, ou.mu, ou.kappa, ou.sigma};
    }
};

enum class Direction { long_spread, short_spread };

inline const char* to_string(Direction d) {
    return d == Direction::long_spread ? "long" : "short";
}

struct Trade {
    Direction direction = Direction::long_spread;
    Date entry_date;
    Date exit_date;
    std::size_t entry_index = 0;
    std::size_t exit_index = 0;
    double entry_spread = 0.0;
    double exit_spread = 0.0;
    double pnl = 0.0;  // log-spread points per unit position
    bool forced_close = false;

    friend bool operator==(const Trade&, const Trade&) = default;
};

struct RuleRun {
    std::vector<Trade> trades;
    /// Position held after each day's close: -1 short, 0 flat, +1 long.
    std::vector<int> positions;
};

/// Day-by-day state machine on closing spreads. At most one unit position;
/// exits are checked before entries, a day that closes a position opens none,
/// no entries on the final day, and anything still open is closed there.
inline RuleRun run_rule(const SpreadSeries& spread, const TradingRule& rule) {
    rule.validate();
    if (spread.size() == 0) throw DomainError("run_rule needs a nonempty spread");
    const std::size_t n = spread.size();
    RuleRun run;
    run.positions.assign(n, 0);

    int position = 0;
    std::size_t entry = 0;
    const auto close = [&](std::size_t t, bool forced) {
        const double s_in = spread.values[entry];
        const double s_out = spread.values[t];
        Trade trade;
        trade.direction = position > 0 ? Direction::long_spread : Direction::short_spread;
        trade.entry_index = entry;
        trade.exit_index = t;
        trade.entry_date = spread.dates[entry];
        trade.exit_date = spread.dates[t];
        trade.entry_spread = s_in;
        trade.exit_spread = s_out;
        trade.pnl = position > 0 ? s_out - s_in : s_in - s_out;
        trade.forced_close = forced;
        run.trades.push_back(trade);
        position = 0;
    };

    for (std::size_t t = 0; t < n; ++t) {
        const double s = spread.values[t];
        const bool last = t + 1 == n;
        if (position < 0 && rule.short_exit(s)) {
            close(t, false);
        } else if (position > 0 && rule.long_exit(s)) {
            close(t, false);
        } else if (position == 0 && !last) {
            if (rule.short_entry(s)) {
                position = -1;
                entry = t;
            } else if (rule.long_entry(s)) {
                position = 1;
                entry = t;
            }
        } else if (position != 0 && last) {
            close(t, true);
        }
        run.positions[t] = position;
    }
    return run;
}

enum class DrawdownConvention {
    points,    // equity - running peak, in cumulative pnl points
    relative,  // (equity - running peak) / running peak
};

/// Worst peak-to-trough move of the equity curve (<= 0) via a running maximum.
inline double max_drawdown(std::span<const double> equity,
                           DrawdownConvention convention = DrawdownConvention::points) {
    double worst = 0.0;
    double peak = equity.empty() ? 0.0 : equity.front();
    for (double e : equity) {
        peak = std::max(peak, e);
        const double dd = convention == DrawdownConvention::points ? e - peak : (e - peak) / peak;
        worst = std::min(worst, dd);
    }
    return worst;
}

struct MetricOptions {
    double risk_free_annual = kDefaultRiskFreeAnnual;
    DrawdownConvention drawdown = DrawdownConvention::points;
    /// Round-trip cost in spread points, charged on the exit day.
    double cost_per_trade = 0.0;
    double initial_equity = 1.0;
};

struct Metrics {
    /// r_t = position_{t-1} (s_t - s_{t-1}) for t = 1..n-1, less costs.
    std::vector<double> daily_returns;
    /// initial_equity + cumulative returns, one entry per day (n entries).
    std::vector<double> equity_curve;
    std::optional<double> sharpe;  // absent when returns have zero variance
    double cagr = 0.0;
    double max_drawdown = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;  // raw fourth standardised moment, not excess
    int n_long = 0;
    int n_short = 0;
};

/// Annualised Sharpe (sqrt(252) scaling, sample standard deviation, daily
/// risk-free rate = annual / 252), CAGR over 252-day years, drawdown, and the
/// third and fourth standardised moments of daily returns.
inline Metrics compute_metrics(std::span<const int> positions, const SpreadSeries& spread,
                               const MetricOptions& options = {}) {
    if (positions.size() != spread.size()) {
        throw DomainError("positions and spread differ in length");
    }
    const std::size_t n = spread.size();
    Metrics m;
    for (std::size_t t = 0; t < n; ++t) {
        const int p = positions[t];
        if (p < -1 || p > 1) throw DomainError("positions must lie in {-1, 0, +1}");
        const int prev = t == 0 ? 0 : positions[t - 1];
        if (p != 0 && p != prev) {
            if (prev != 0) throw DomainError("position flips long/short without going flat");
            (p > 0 ? m.n_long : m.n_short) += 1;
        }
    }

    m.equity_curve.reserve(n);
    m.equity_curve.push_back(options.initial_equity);
    if (n > 1) m.daily_returns.reserve(n - 1);
    for (std::size_t t = 1; t < n; ++t) {
        double r = positions[t - 1] * (spread.values[t] - spread.values[t - 1]);
        if (positions[t - 1] != 0 && positions[t] == 0) r -= options.cost_per_trade;
        m.daily_returns.push_back(r);
        m.equity_curve.push_back(m.equity_curve.back() + r);
    }
    m.max_drawdown = max_drawdown(m.equity_curve, options.drawdown);

    const std::size_t k = m.daily_returns.size();
    if (k > 0) {
        const double years = static_cast<double>(k) / kTradingDaysPerYear;
        const double growth = m.equity_curve.back() / m.equity_curve.front();
        m.cagr = growth > 0.0 ? std::pow(growth, 1.0 / years) - 1.0 : -1.0;
    }
    if (k >= 2) {
        double mean = 0.0;
        for (double r : m.daily_returns) mean += r;
        mean /= static_cast<double>(k);
        double m2 = 0.0, m3 = 0.0, m4 = 0.0;
        for (double r : m.daily_returns) {
            const double d = r - mean;
            const double d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        const double kd = static_cast<double>(k);
        if (m2 > 0.0) {
            const double sd = std::sqrt(m2 / (kd - 1.0));
            const double rf_daily = options.risk_free_annual / kTradingDaysPerYear;
            m.sharpe = (mean - rf_daily) / sd * std::sqrt(kTradingDaysPerYear);
            const double var_pop = m2 / kd;
            m.skewness = (m3 / kd) / std::pow(var_pop, 1.5);
            m.kurtosis = (m4 / kd) / (var_pop * var_pop);
        }
    }
    return m;
}

struct BacktestReport {
    double c = 0.0;
    std::vector<Trade> trades;
    std::vector<int> positions;
    Metrics metrics;

    std::size_t trade_count() const { return trades.size(); }
};

inline BacktestReport backtest(const SpreadSeries& spread, const TradingRule& rule,
                               const MetricOptions& options = {}) {
    RuleRun run = run_rule(spread, rule);
    BacktestReport report;
    report.c = rule.c;
    report.metrics = compute_metrics(run.positions, spread, options);
    report.trades = std::move(run.trades);
    report.positions = std::move(run.positions);
    return report;
}

enum class GridSpacing { log, linear };

struct CGrid {
    double min = 0.01;
    double max = 200.0;
    int count = 200;
    GridSpacing spacing = GridSpacing::log;

    std::vector<double> values() const {
        if (count < 1 || !(min >= 0.0) || !(max >= min) || !std::isfinite(max)) {
            throw ConfigError("invalid c grid");
        }
        if (spacing == GridSpacing::log && !(min > 0.0)) {
            throw ConfigError("log-spaced c grid needs min > 0");
        }
        std::vector<double> out(static_cast<std::size_t>(count));
        if (count == 1) {
            out[0] = min;
            return out;
        }
        for (int i = 0; i < count; ++i) {
            const double f = static_cast<double>(i) / static_cast<double>(count - 1);
            out[static_cast<std::size_t>(i)] =
                spacing == GridSpacing::log
                    ? std::exp(std::log(min) + f * (std::log(max) - std::log(min)))
                    : min + f * (max - min);
        }
        out.front() = min;
        out.back() = max;
        return out;
    }
};

struct COptimization {
    double c = 0.0;
    BacktestReport report;
};

/// Picks the grid value of c with the highest in-sample Sharpe ratio; ties go
/// to the smallest c. Candidates whose Sharpe is absent are skipped.
inline COptimization optimize_c(const SpreadSeries& spread_train, const OUParams& ou,
                                std::span<const double> candidate_grid,
                                const MetricOptions& options = {}, double exit_epsilon = 1e-4) {
    if (candidate_grid.empty()) throw DomainError("empty c grid");
    std::vector<double> grid(candidate_grid.begin(), candidate_grid.end());
    for (double c : grid) {
        if (!std::isfinite(c) || c < 0.0) throw DomainError("c grid values must be finite and >= 0");
    }
    std::sort(grid.begin(), grid.end());

    std::optional<COptimization> best;
    for (double c : grid) {
        BacktestReport report = backtest(spread_train, TradingRule::from(ou, c, exit_epsilon), options);
        if (!report.metrics.sharpe) continue;
        if (!best || *report.metrics.sharpe > *best->report.metrics.sharpe) {
            best = COptimization{c, std::move(report)};
        }
    }
    if (!best) {
        throw NoTradeError("no candidate c produced any trades; widen the grid towards smaller c");
    }
    return *best;
}

struct PairEvaluation {
    SpreadSeries train_spread;
    SpreadSeries test_spread;
    BacktestReport train;
    /// Absent when the testing segment has fewer than 2 observations.
    std::optional<BacktestReport> test;
};

/// Builds both spreads with the training hedge ratio and runs the rule with
/// training-fitted (mu, kappa, sigma) and the given c on each segment.
inline PairEvaluation evaluate_pair(const PairDataset& pair, const CointegrationResult& coint,
                                    const FitResult& fit, double c,
                                    const MetricOptions& options = {},
                                    double exit_epsilon = 1e-4) {
    if (!coint.hedge_ratio) throw DomainError("pair is not cointegrated; no hedge ratio");
    const SpreadSeries full = build_spread(pair, *coint.hedge_ratio);
    PairEvaluation out;
    out.train_spread = slice(full, 0, pair.split_index);
    out.test_spread = slice(full, pair.split_index, full.size());
    const TradingRule rule = TradingRule::from(fit.ou_params, c, exit_epsilon);
    out.train = backtest(out.train_spread, rule, options);
    if (out.test_spread.size() >= 2) {
        out.test = backtest(out.test_spread, rule, options);
    }
    return out;
}

}  // namespace stochspread
