#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stochspread/backtest.hpp"
#include "stochspread/cointegration.hpp"
#include "stochspread/error.hpp"
#include "stochspread/estimation.hpp"
#include "stochspread/market_data.hpp"
#include "stochspread/spread_model.hpp"

namespace stochspread {

/// Shortest text that parses back to the same double (17 significant digits).
inline std::string format_exact(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Fixed-point text; never prints a negative zero.
inline std::string format_fixed(double x, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, x);
    std::string s = buf;
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

inline std::string format_percent(double fraction, int decimals = 2) {
    return format_fixed(100.0 * fraction, decimals) + "%";
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_rows(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> row;
        for (auto f : split_fields(line)) row.emplace_back(f);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline double to_double(const std::string& text, std::string_view what) {
    const auto v = parse_double(text);
    if (!v) throw ParseError("cannot parse " + std::string(what) + " from '" + text + "'");
    return *v;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scan report

inline constexpr std::string_view kScanHeader =
    "pair_a,pair_b,lag,eigen1,eigen2,trace_r0,crit_r0_5pct,trace_r1,crit_r1_5pct,rank,hedge_ratio";

/// One row per successfully tested pair; hedge_ratio is empty for rank 0.
/// Failed pairs are not written.
inline void write_scan_csv(std::ostream& out, const ScanReport& report) {
    out << kScanHeader << '\n';
    for (const auto& e : report.entries) {
        if (!e.result) continue;
        const auto& r = *e.result;
        out << e.id_a << ',' << e.id_b << ',' << e.lag << ',' << format_exact(r.eigenvalues[0])
            << ',' << format_exact(r.eigenvalues[1]) << ',' << format_exact(r.trace_statistics[0])
            << ',' << format_exact(r.critical_values_5pct[0]) << ','
            << format_exact(r.trace_statistics[1]) << ','
            << format_exact(r.critical_values_5pct[1]) << ',' << r.rank << ','
            << (r.hedge_ratio ? format_exact(*r.hedge_ratio) : std::string{}) << '\n';
    }
}

inline ScanReport read_scan_csv(std::istream& in) {
    const auto rows = detail::read_csv_rows(in);
    if (rows.empty()) throw ParseError("scan report is empty");
    std::string header;
    for (const auto& f : rows[0]) header += (header.empty() ? "" : ",") + f;
    if (header != kScanHeader) throw ParseError("unexpected scan report header");
    ScanReport report;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() != 11) throw ParseError("scan report row " + std::to_string(i + 1) + " malformed");
        CointegrationResult r;
        r.eigenvalues = {detail::to_double(f[3], "eigen1"), detail::to_double(f[4], "eigen2")};
        r.trace_statistics = {detail::to_double(f[5], "trace_r0"),
                              detail::to_double(f[7], "trace_r1")};
        r.critical_values_5pct = {detail::to_double(f[6], "crit_r0_5pct"),
                                  detail::to_double(f[8], "crit_r1_5pct")};
        r.rank = static_cast<int>(detail::to_double(f[9], "rank"));
        if (!f[10].empty()) {
            r.hedge_ratio = detail::to_double(f[10], "hedge_ratio");
            r.cointegration_vector = {1.0, *r.hedge_ratio};
        }
        report.entries.push_back(ScanEntry{f[0], f[1], static_cast<int>(detail::to_double(f[2], "lag")),
                                           r, {}});
    }
    return report;
}

// ---------------------------------------------------------------------------
// Fit report

struct FitRecord {
    std::string pair_id;
    double hedge_ratio = 0.0;
    std::uint64_t seed = 0;
    FitResult fit;
};

/// Two-column field,value report; numbers in round-trip precision.
inline void write_fit_report(std::ostream& out, const FitRecord& record) {
    const auto& f = record.fit;
    const HalfLife hl = half_life(f.ou_params);
    out << "field,value\n";
    out << "pair," << record.pair_id << '\n';
    out << "hedge_ratio," << format_exact(record.hedge_ratio) << '\n';
    out << "seed," << record.seed << '\n';
    out << "X," << format_exact(f.best_params.x) << '\n';
    out << "Y," << format_exact(f.best_params.y) << '\n';
    out << "Z," << format_exact(f.best_params.z) << '\n';
    out << "V," << format_exact(f.best_params.v) << '\n';
    out << "kappa," << format_exact(f.ou_params.kappa) << '\n';
    out << "mu," << format_exact(f.ou_params.mu) << '\n';
    out << "sigma," << format_exact(f.ou_params.sigma) << '\n';
    out << "half_life_days," << format_exact(hl.days) << '\n';
    out << "half_life_inverse_kappa," << format_exact(hl.inverse_kappa) << '\n';
    out << "log_likelihood," << format_exact(f.log_likelihood) << '\n';
    out << "generations," << f.generations_run << '\n';
    out << "converged," << (f.converged ? "true" : "false") << '\n';
    out << "degenerate," << (f.degenerate ? "true" : "false") << '\n';
}

inline FitRecord read_fit_report(std::istream& in) {
    std::map<std::string, std::string> kv;
    for (const auto& row : detail::read_csv_rows(in)) {
        if (row.size() == 2) kv[row[0]] = row[1];
    }
    const auto get = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw ParseError("fit report lacks field '" + key + "'");
        return it->second;
    };
    FitRecord rec;
    rec.pair_id = get("pair");
    rec.hedge_ratio = detail::to_double(get("hedge_ratio"), "hedge_ratio");
    rec.seed = std::stoull(get("seed"));
    rec.fit.best_params = StateSpaceParams{detail::to_double(get("X"), "X"),
                                           detail::to_double(get("Y"), "Y"),
                                           detail::to_double(get("Z"), "Z"),
                                           detail::to_double(get("V"), "V")};
    rec.fit.ou_params = from_statespace(rec.fit.best_params);
    rec.fit.log_likelihood = detail::to_double(get("log_likelihood"), "log_likelihood");
    rec.fit.generations_run = std::stoi(get("generations"));
    rec.fit.converged = get("converged") == "true";
    rec.fit.degenerate = get("degenerate") == "true";
    return rec;
}

/// date, spread, filtered_mean, filtered_var, smoothed_mean, smoothed_var
inline void write_state_csv(std::ostream& out, const SpreadSeries& spread, const KalmanOutput& k) {
    out << "date,spread,filtered_mean,filtered_var,smoothed_mean,smoothed_var\n";
    for (std::size_t t = 0; t < spread.size(); ++t) {
        out << format_date(spread.dates[t]) << ',' << format_exact(spread.values[t]) << ','
            << format_exact(k.filtered_means[t]) << ',' << format_exact(k.filtered_variances[t])
            << ',' << format_exact(k.smoothed_means[t]) << ','
            << format_exact(k.smoothed_variances[t]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Backtest metric rows

struct MetricsRow {
    std::string commodity1;
    std::string commodity2;
    double c = 0.0;
    std::optional<double> sharpe;
    double cagr = 0.0;
    double max_drawdown = 0.0;
    double skew = 0.0;
    double kurt = 0.0;
    int n_long = 0;
    int n_short = 0;

    static MetricsRow from(std::string a, std::string b, const BacktestReport& r) {
        return MetricsRow{std::move(a),         std::move(b),          r.c,
                          r.metrics.sharpe,     r.metrics.cagr,        r.metrics.max_drawdown,
                          r.metrics.skewness,   r.metrics.kurtosis,    r.metrics.n_long,
                          r.metrics.n_short};
    }
};

inline constexpr std::string_view kMetricsHeader =
    "commodity1,commodity2,c,sharpe,cagr,max_drawdown,skew,kurt,n_long,n_short";

/// Machine-readable per-pair row (fractions, round-trip precision, empty
/// sharpe when absent).
inline void write_metrics_row(std::ostream& out, const MetricsRow& row) {
    out << kMetricsHeader << '\n'
        << row.commodity1 << ',' << row.commodity2 << ',' << format_exact(row.c) << ','
        << (row.sharpe ? format_exact(*row.sharpe) : std::string{}) << ','
        << format_exact(row.cagr) << ',' << format_exact(row.max_drawdown) << ','
        << format_exact(row.skew) << ',' << format_exact(row.kurt) << ',' << row.n_long << ','
        << row.n_short << '\n';
}

inline MetricsRow read_metrics_row(std::istream& in) {
    const auto rows = detail::read_csv_rows(in);
    if (rows.size() != 2 || rows[1].size() != 10) throw ParseError("malformed metrics row file");
    const auto& f = rows[1];
    MetricsRow row;
    row.commodity1 = f[0];
    row.commodity2 = f[1];
    row.c = detail::to_double(f[2], "c");
    if (!f[3].empty()) row.sharpe = detail::to_double(f[3], "sharpe");
    row.cagr = detail::to_double(f[4], "cagr");
    row.max_drawdown = detail::to_double(f[5], "max_drawdown");
    row.skew = detail::to_double(f[6], "skew");
    row.kurt = detail::to_double(f[7], "kurt");
    row.n_long = std::stoi(f[8]);
    row.n_short = std::stoi(f[9]);
    return row;
}

inline constexpr std::string_view kTableHeader =
    "commodity1,commodity2,c,SR,CAGR,max_drawdown,skew,kurt,n_long,n_short";

/// Results table in the layout of a published pairs-trading summary: two
/// decimals throughout, CAGR and drawdown as percentages of the unit notional,
/// "-" for an absent Sharpe ratio.
inline void write_results_table(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << kTableHeader << '\n';
    for (const auto& r : rows) {
        out << r.commodity1 << ',' << r.commodity2 << ',' << format_fixed(r.c, 2) << ','
            << (r.sharpe ? format_fixed(*r.sharpe, 2) : std::string("-")) << ','
            << format_percent(r.cagr) << ',' << format_percent(r.max_drawdown) << ','
            << format_fixed(r.skew, 2) << ',' << format_fixed(r.kurt, 2) << ',' << r.n_long
            << ',' << r.n_short << '\n';
    }
}

// ---------------------------------------------------------------------------
// Equity curves

inline void write_equity_csv(std::ostream& out, const std::vector<Date>& dates,
                             const std::vector<double>& equity) {
    out << "date,equity\n";
    for (std::size_t t = 0; t < equity.size(); ++t) {
        out << format_date(dates[t]) << ',' << format_exact(equity[t]) << '\n';
    }
}

namespace detail {

inline std::string svg_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/// Standalone SVG line chart of an equity curve with axes, five y ticks, first
/// and last date on the x axis, and a title.
inline void write_equity_svg(std::ostream& out, const std::vector<Date>& dates,
                             const std::vector<double>& equity, std::string_view title) {
    constexpr double width = 800, height = 400;
    constexpr double left = 70, right = 20, top = 40, bottom = 50;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    double lo = equity.empty() ? 0.0 : *std::min_element(equity.begin(), equity.end());
    double hi = equity.empty() ? 1.0 : *std::max_element(equity.begin(), equity.end());
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const auto px = [&](std::size_t i) {
        const double denom = equity.size() > 1 ? static_cast<double>(equity.size() - 1) : 1.0;
        return left + plot_w * static_cast<double>(i) / denom;
    };
    const auto py = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">"
        << detail::svg_escape(title) << "</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << top + plot_h << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
        << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        const std::string y = format_fixed(py(v), 2);
        out << "<line x1=\"" << left - 5 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\"" << y
            << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << left - 8 << "\" y=\"" << y
            << "\" text-anchor=\"end\" dominant-baseline=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"11\">"
            << format_fixed(v, 3) << "</text>\n";
    }
    if (!dates.empty()) {
        out << "<text x=\"" << left << "\" y=\"" << top + plot_h + 20
            << "\" text-anchor=\"start\" font-family=\"sans-serif\" font-size=\"11\">"
            << format_date(dates.front()) << "</text>\n";
        out << "<text x=\"" << left + plot_w << "\" y=\"" << top + plot_h + 20
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << format_date(dates.back()) << "</text>\n";
    }
    out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">date</text>\n";
    out << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 "
        << top + plot_h / 2
        << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">cumulative "
           "equity</text>\n";
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < equity.size(); ++i) {
        if (i) out << ' ';
        out << format_fixed(px(i), 2) << ',' << format_fixed(py(equity[i]), 2);
    }
    out << "\"/>\n</svg>\n";
}

}  // namespace stochspread
