#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stochspread/date.hpp"
#include "stochspread/error.hpp"

namespace stochspread {

/// Gap-free, dated natural-log price series for one commodity.
struct PriceSeries {
    std::string commodity_id;
    std::vector<Date> dates;
    std::vector<double> log_prices;

    std::size_t size() const { return dates.size(); }

    /// Throws DomainError if the series breaks its invariants.
    void validate() const {
        if (dates.size() != log_prices.size()) {
            throw DomainError(commodity_id + ": dates and log prices differ in length");
        }
        if (dates.size() < 2) {
            throw DomainError(commodity_id + ": a price series needs at least 2 observations");
        }
        for (std::size_t i = 1; i < dates.size(); ++i) {
            if (!(dates[i - 1] < dates[i])) {
                throw DomainError(commodity_id + ": dates must be strictly increasing at " +
                                  format_date(dates[i]));
            }
        }
        for (std::size_t i = 0; i < log_prices.size(); ++i) {
            if (!std::isfinite(log_prices[i])) {
                throw DomainError(commodity_id + ": non-finite log price at " +
                                  format_date(dates[i]));
            }
        }
    }
};

/// Log prices as loaded, with std::nullopt marking an empty CSV cell.
struct RawSeries {
    std::string commodity_id;
    std::vector<Date> dates;
    std::vector<std::optional<double>> log_prices;

    std::size_t size() const { return dates.size(); }
};

struct CsvSchema {
    std::string date_column = "date";
    /// Empty selects every column other than the date column, in file order.
    std::vector<std::string> price_columns;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view text) {
    if (text.empty()) return std::nullopt;
    // std::from_chars rejects a leading '+', which some exporters emit.
    if (text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

}  // namespace detail

/// Reads a price CSV: header row, a date column, one raw positive spot price
/// column per commodity, empty cells as gaps. Prices come back as natural logs
/// with rows sorted by date.
inline std::vector<RawSeries> parse_price_csv(std::istream& in, const CsvSchema& schema = {},
                                              std::string_view source = "<csv>") {
    const std::string src(source);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        for (auto f : detail::split_fields(line)) header.emplace_back(f);
        break;
    }
    if (header.empty()) {
        throw EmptyInputError(src + ": empty input");
    }

    const auto column_of = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw ParseError(src + ": missing column '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t date_col = column_of(schema.date_column);
    std::vector<std::size_t> price_cols;
    if (schema.price_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c != date_col) price_cols.push_back(c);
        }
    } else {
        for (const auto& name : schema.price_columns) price_cols.push_back(column_of(name));
    }
    if (price_cols.empty()) {
        throw ParseError(src + ": no price columns");
    }

    struct Row {
        Date date;
        std::size_t line_no;
        std::vector<std::optional<double>> values;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_fields(line);
        if (fields.size() != header.size()) {
            throw ParseError(src + ": row " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(header.size()));
        }
        const auto date = parse_date(fields[date_col]);
        if (!date) {
            throw ParseError(src + ": malformed date '" + std::string(fields[date_col]) +
                             "' in row " + std::to_string(line_no));
        }
        Row row{*date, line_no, {}};
        row.values.reserve(price_cols.size());
        for (std::size_t c : price_cols) {
            const auto cell = fields[c];
            if (cell.empty()) {
                row.values.emplace_back(std::nullopt);
                continue;
            }
            const auto price = detail::parse_double(cell);
            if (!price) {
                throw ParseError(src + ": malformed price '" + std::string(cell) + "' in row " +
                                 std::to_string(line_no) + ", column " + header[c]);
            }
            if (!(*price > 0.0) || !std::isfinite(*price)) {
                throw DomainError(src + ": non-positive price in row " + std::to_string(line_no) +
                                  ", column " + header[c]);
            }
            row.values.emplace_back(std::log(*price));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw EmptyInputError(src + ": no data rows");
    }
    if (rows.size() < 2) {
        throw DomainError(src + ": a price series needs at least 2 observations, found 1");
    }

    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].date == rows[i - 1].date) {
            throw ParseError(src + ": duplicate date " + format_date(rows[i].date) + " in row " +
                             std::to_string(rows[i].line_no));
        }
    }

    std::vector<RawSeries> out(price_cols.size());
    for (std::size_t k = 0; k < price_cols.size(); ++k) {
        out[k].commodity_id = header[price_cols[k]];
        out[k].dates.reserve(rows.size());
        out[k].log_prices.reserve(rows.size());
        for (const auto& row : rows) {
            out[k].dates.push_back(row.date);
            out[k].log_prices.push_back(row.values[k]);
        }
    }
    return out;
}

inline std::vector<RawSeries> load_csv(const std::filesystem::path& path,
                                       const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open data file: " + path.string());
    }
    return parse_price_csv(in, schema, path.string());
}

/// Fills every interior gap by linear interpolation on log prices between the
/// nearest present neighbours. Rows count as unit steps regardless of the
/// calendar distance between them.
inline PriceSeries interpolate_gaps(const RawSeries& series) {
    const std::size_t n = series.size();
    if (series.log_prices.size() != n) {
        throw DomainError(series.commodity_id + ": dates and log prices differ in length");
    }
    if (n == 0 || !series.log_prices.front() || !series.log_prices.back()) {
        throw BoundaryGapError(series.commodity_id +
                               ": gap at series boundary; trim before interpolating");
    }
    PriceSeries out{series.commodity_id, series.dates, std::vector<double>(n)};
    std::size_t last_present = 0;
    out.log_prices[0] = *series.log_prices[0];
    for (std::size_t i = 1; i < n; ++i) {
        if (!series.log_prices[i]) continue;
        const double hi = *series.log_prices[i];
        const double lo = out.log_prices[last_present];
        const auto span = static_cast<double>(i - last_present);
        for (std::size_t k = last_present + 1; k < i; ++k) {
            const auto step = static_cast<double>(k - last_present);
            out.log_prices[k] = lo + (hi - lo) * step / span;
        }
        out.log_prices[i] = hi;
        last_present = i;
    }
    return out;
}

inline RawSeries to_raw(const PriceSeries& series) {
    RawSeries raw{series.commodity_id, series.dates, {}};
    raw.log_prices.assign(series.log_prices.begin(), series.log_prices.end());
    return raw;
}

/// Brings a universe onto one calendar: intersects the date sets, trims
/// leading and trailing rows until every series is observed at both ends,
/// then interpolates interior gaps per series.
inline std::vector<PriceSeries> align(std::span<const RawSeries> universe) {
    if (universe.empty()) return {};
    std::vector<Date> common = universe.front().dates;
    for (std::size_t s = 1; s < universe.size(); ++s) {
        std::vector<Date> next;
        std::set_intersection(common.begin(), common.end(), universe[s].dates.begin(),
                              universe[s].dates.end(), std::back_inserter(next));
        common = std::move(next);
    }

    std::vector<RawSeries> restricted;
    restricted.reserve(universe.size());
    for (const auto& series : universe) {
        std::map<Date, std::optional<double>> by_date;
        for (std::size_t i = 0; i < series.size(); ++i) {
            by_date.emplace(series.dates[i], series.log_prices[i]);
        }
        RawSeries r{series.commodity_id, common, {}};
        r.log_prices.reserve(common.size());
        for (Date d : common) r.log_prices.push_back(by_date.at(d));
        restricted.push_back(std::move(r));
    }

    const auto all_present = [&](std::size_t row) {
        return std::all_of(restricted.begin(), restricted.end(),
                           [row](const RawSeries& r) { return r.log_prices[row].has_value(); });
    };
    std::size_t first = 0;
    std::size_t last = common.size();
    while (first < last && !all_present(first)) ++first;
    while (last > first && !all_present(last - 1)) --last;
    if (last - first < 2) {
        throw DomainError("aligned universe has fewer than 2 common observations");
    }

    std::vector<PriceSeries> out;
    out.reserve(restricted.size());
    for (auto& r : restricted) {
        r.dates = std::vector<Date>(common.begin() + static_cast<std::ptrdiff_t>(first),
                                    common.begin() + static_cast<std::ptrdiff_t>(last));
        r.log_prices = std::vector<std::optional<double>>(
            r.log_prices.begin() + static_cast<std::ptrdiff_t>(first),
            r.log_prices.begin() + static_cast<std::ptrdiff_t>(last));
        out.push_back(interpolate_gaps(r));
    }
    return out;
}

/// Two aligned series plus the number of leading observations used for training.
struct PairDataset {
    PriceSeries series_a;
    PriceSeries series_b;
    std::size_t split_index = 0;

    std::size_t size() const { return series_a.size(); }
    std::size_t training_size() const { return split_index; }
    std::size_t testing_size() const { return size() - split_index; }
};

namespace detail {

inline PriceSeries slice(const PriceSeries& s, std::size_t begin, std::size_t end) {
    const auto b = static_cast<std::ptrdiff_t>(begin);
    const auto e = static_cast<std::ptrdiff_t>(end);
    return PriceSeries{s.commodity_id, {s.dates.begin() + b, s.dates.begin() + e},
                       {s.log_prices.begin() + b, s.log_prices.begin() + e}};
}

inline void require_aligned(const PriceSeries& a, const PriceSeries& b) {
    if (a.dates != b.dates) {
        throw DomainError(a.commodity_id + " and " + b.commodity_id +
                          " do not share a date vector");
    }
}

}  // namespace detail

inline PriceSeries training_segment(const PriceSeries& s, std::size_t split_index) {
    return detail::slice(s, 0, split_index);
}

inline PriceSeries testing_segment(const PriceSeries& s, std::size_t split_index) {
    return detail::slice(s, split_index, s.size());
}

/// Splits at an explicit training length; 0 < split_index < length.
inline PairDataset split_at(const PriceSeries& a, const PriceSeries& b, std::size_t split_index) {
    detail::require_aligned(a, b);
    if (split_index == 0 || split_index >= a.size()) {
        throw DomainError("split index " + std::to_string(split_index) +
                          " outside (0, " + std::to_string(a.size()) + ")");
    }
    return PairDataset{a, b, split_index};
}

/// split_index = floor(train_fraction * length).
inline PairDataset split(const PriceSeries& a, const PriceSeries& b, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DomainError("train fraction must lie in (0, 1)");
    }
    const auto index =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(a.size())));
    return split_at(a, b, index);
}

/// Writes aligned series in the loader's schema: `date` then one raw price
/// column per series (exp of the log price, 17 significant digits).
inline void write_price_csv(std::ostream& out, std::span<const PriceSeries> universe) {
    out << "date";
    for (const auto& s : universe) out << ',' << s.commodity_id;
    out << '\n';
    if (universe.empty()) return;
    for (std::size_t t = 0; t < universe.front().size(); ++t) {
        out << format_date(universe.front().dates[t]);
        for (const auto& s : universe) {
            if (s.dates[t] != universe.front().dates[t]) {
                throw DomainError("write_price_csv needs aligned series");
            }
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", std::exp(s.log_prices[t]));
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace stochspread
