#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stochspread/error.hpp"
#include "stochspread/market_data.hpp"
#include "stochspread/parallel.hpp"

namespace stochspread {

/// 5% trace-test critical values for a bivariate system with an unrestricted
/// constant in the VECM (MacKinnon, Haug & Michelis 1999; the same figures are
/// tabulated as `c_sjt` for det_order = 0 in statsmodels). Index = rank
/// hypothesis r, i.e. n - r = 2, 1.
inline constexpr std::array<double, 2> kTraceCritical5pct = {15.4943, 3.8415};

/// Least-squares fit of
///   dy_t = mu + A y_{t-1} + sum_{i=1}^{p-1} Gamma_i dy_{t-i} + w_t
/// for a bivariate y. The regression blocks are kept for the rank test.
struct VecmFit {
    int lag_order = 1;
    Eigen::Matrix2d long_run;  // A
    std::vector<Eigen::Matrix2d> gamma_matrices;
    Eigen::Vector2d drift;
    Eigen::MatrixX2d residuals;
    /// OLS standard errors of the entries of A.
    Eigen::Matrix2d long_run_std_errors;

    Eigen::MatrixX2d differences;    // dy_t
    Eigen::MatrixX2d lagged_levels;  // y_{t-1}
    Eigen::MatrixXd short_run;       // [1, dy_{t-1}, ..., dy_{t-p+1}]

    Eigen::Index observations() const { return residuals.rows(); }
};

struct CointegrationResult {
    std::array<double, 2> eigenvalues{};  // descending
    std::array<double, 2> trace_statistics{};
    std::array<double, 2> critical_values_5pct = kTraceCritical5pct;
    int rank = 0;
    /// b / a of the dominant eigenvector; present only when rank >= 1.
    /// Spread convention: s_t = y_a(t) + hedge_ratio * y_b(t).
    std::optional<double> hedge_ratio;
    /// Dominant eigenvector scaled so the first component is 1.
    std::array<double, 2> cointegration_vector{};

    bool cointegrated() const { return rank >= 1; }
};

namespace detail {

inline Eigen::MatrixX2d stack_levels(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DomainError("paired series differ in length");
    }
    Eigen::MatrixX2d y(static_cast<Eigen::Index>(a.size()), 2);
    for (std::size_t t = 0; t < a.size(); ++t) {
        y(static_cast<Eigen::Index>(t), 0) = a[t];
        y(static_cast<Eigen::Index>(t), 1) = b[t];
    }
    return y;
}

}  // namespace detail

inline VecmFit fit_vecm(std::span<const double> series_a, std::span<const double> series_b,
                        int lag_order) {
    if (lag_order < 1) {
        throw DomainError("VECM lag order must be at least 1");
    }
    const Eigen::MatrixX2d y = detail::stack_levels(series_a, series_b);
    const Eigen::Index n = y.rows();
    const Eigen::Index p = lag_order;
    if (n <= p + 2) {
        throw DomainError("series length " + std::to_string(n) + " too short for lag order " +
                          std::to_string(p));
    }

    const Eigen::Index rows = n - p;
    const Eigen::Index k_short = 1 + 2 * (p - 1);
    const Eigen::Index k = k_short + 2;

    VecmFit fit;
    fit.lag_order = lag_order;
    fit.differences.resize(rows, 2);
    fit.lagged_levels.resize(rows, 2);
    fit.short_run.resize(rows, k_short);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::Index t = r + p;
        fit.differences.row(r) = y.row(t) - y.row(t - 1);
        fit.lagged_levels.row(r) = y.row(t - 1);
        fit.short_run(r, 0) = 1.0;
        for (Eigen::Index i = 1; i < p; ++i) {
            fit.short_run.block(r, 1 + 2 * (i - 1), 1, 2) = y.row(t - i) - y.row(t - i - 1);
        }
    }

    Eigen::MatrixXd design(rows, k);
    design.col(0) = fit.short_run.col(0);
    design.middleCols(1, 2) = fit.lagged_levels;
    if (k_short > 1) {
        design.rightCols(k_short - 1) = fit.short_run.rightCols(k_short - 1);
    }

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < k) {
        throw DegenerateInputError("singular VECM regressor matrix (constant or collinear series)");
    }
    const Eigen::MatrixXd coef = qr.solve(Eigen::MatrixXd(fit.differences));
    fit.residuals = fit.differences - design * coef;

    fit.drift = coef.row(0).transpose();
    fit.long_run = coef.middleRows(1, 2).transpose();
    for (Eigen::Index i = 1; i < p; ++i) {
        fit.gamma_matrices.emplace_back(coef.middleRows(3 + 2 * (i - 1), 2).transpose());
    }

    const Eigen::MatrixXd xtx_inv =
        (design.transpose() * design).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    const double dof = static_cast<double>(rows - k);
    for (int eq = 0; eq < 2; ++eq) {
        const double s2 = fit.residuals.col(eq).squaredNorm() / dof;
        for (int j = 0; j < 2; ++j) {
            fit.long_run_std_errors(eq, j) = std::sqrt(s2 * xtx_inv(1 + j, 1 + j));
        }
    }
    return fit;
}

/// Lag order of the levels VAR(p) with constant that minimises BIC over
/// p = 1..max_lag, all candidates fitted on a common sample. Ties go to the
/// smaller lag.
inline int select_lag(std::span<const double> series_a, std::span<const double> series_b,
                      int max_lag) {
    if (max_lag < 1) {
        throw DomainError("max_lag must be at least 1");
    }
    const Eigen::MatrixX2d y = detail::stack_levels(series_a, series_b);
    const Eigen::Index n = y.rows();
    if (n <= max_lag + 2) {
        throw DomainError("series length " + std::to_string(n) + " too short for max_lag " +
                          std::to_string(max_lag));
    }
    if (max_lag == 1) return 1;

    const Eigen::Index rows = n - max_lag;
    const double log_rows = std::log(static_cast<double>(rows));
    int best_lag = 1;
    double best_bic = std::numeric_limits<double>::infinity();
    for (int p = 1; p <= max_lag; ++p) {
        const Eigen::Index k = 1 + 2 * p;
        Eigen::MatrixXd design(rows, k);
        Eigen::MatrixX2d target(rows, 2);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const Eigen::Index t = r + max_lag;
            target.row(r) = y.row(t);
            design(r, 0) = 1.0;
            for (Eigen::Index i = 1; i <= p; ++i) {
                design.block(r, 1 + 2 * (i - 1), 1, 2) = y.row(t - i);
            }
        }
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        if (qr.rank() < k) {
            throw DegenerateInputError("singular VAR regressor matrix at lag " +
                                       std::to_string(p));
        }
        const Eigen::MatrixX2d resid =
            target - design * qr.solve(Eigen::MatrixXd(target));
        const Eigen::Matrix2d sigma = resid.transpose() * resid / static_cast<double>(rows);
        const double bic = std::log(sigma.determinant()) +
                           log_rows * static_cast<double>(2 * k) / static_cast<double>(rows);
        if (bic < best_bic) {
            best_bic = bic;
            best_lag = p;
        }
    }
    return best_lag;
}

/// Johansen trace test on a fitted VECM: concentrates out the short-run terms,
/// solves |lambda S11 - S10 S00^-1 S01| = 0 and decides the rank sequentially
/// at the 5% level (H0: r = 0, no cointegration, tested first).
inline CointegrationResult johansen_test(const VecmFit& vecm) {
    const auto& z = vecm.short_run;
    const Eigen::Index rows = vecm.observations();
    const auto project_out = [&](const Eigen::MatrixX2d& m) -> Eigen::MatrixX2d {
        const Eigen::MatrixXd coef = z.colPivHouseholderQr().solve(Eigen::MatrixXd(m));
        return m - z * coef;
    };
    const Eigen::MatrixX2d r0 = project_out(vecm.differences);
    const Eigen::MatrixX2d r1 = project_out(vecm.lagged_levels);
    const double scale = 1.0 / static_cast<double>(rows);
    const Eigen::Matrix2d s00 = r0.transpose() * r0 * scale;
    const Eigen::Matrix2d s11 = r1.transpose() * r1 * scale;
    const Eigen::Matrix2d s01 = r0.transpose() * r1 * scale;

    const Eigen::LLT<Eigen::Matrix2d> s00_llt(s00);
    const Eigen::LLT<Eigen::Matrix2d> s11_llt(s11);
    if (s00_llt.info() != Eigen::Success || s11_llt.info() != Eigen::Success) {
        throw NumericalError("Johansen moment matrices are not positive definite");
    }
    Eigen::Matrix2d lhs = s01.transpose() * s00_llt.solve(s01);
    lhs = 0.5 * (lhs + lhs.transpose()).eval();
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix2d> solver(lhs, s11);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("Johansen eigenproblem failed");
    }

    CointegrationResult result;
    // Eigen returns eigenvalues in ascending order.
    for (int i = 0; i < 2; ++i) {
        double lambda = solver.eigenvalues()(1 - i);
        if (!std::isfinite(lambda) || lambda >= 1.0) {
            throw NumericalError("Johansen eigenvalue outside [0, 1)");
        }
        if (lambda < 0.0) lambda = 0.0;  // rounding below zero
        result.eigenvalues[static_cast<std::size_t>(i)] = lambda;
    }
    const double t = static_cast<double>(rows);
    const double l0 = std::log1p(-result.eigenvalues[0]);
    const double l1 = std::log1p(-result.eigenvalues[1]);
    result.trace_statistics = {-t * (l0 + l1), -t * l1};

    result.rank = 0;
    for (std::size_t r = 0; r < 2; ++r) {
        if (result.trace_statistics[r] > result.critical_values_5pct[r]) {
            result.rank = static_cast<int>(r) + 1;
        } else {
            break;
        }
    }

    const Eigen::Vector2d v = solver.eigenvectors().col(1);
    if (!v.allFinite()) {
        throw NumericalError("non-finite Johansen eigenvector");
    }
    if (std::abs(v(0)) <= 1e-12 * std::abs(v(1))) {
        throw DegenerateVectorError("dominant cointegration vector has a zero first component");
    }
    result.cointegration_vector = {1.0, v(1) / v(0)};
    if (result.rank >= 1) {
        result.hedge_ratio = result.cointegration_vector[1];
    }
    return result;
}

struct ScanOptions {
    double train_fraction = 0.8;
    std::optional<std::size_t> split_index;
    int max_lag = 10;
    std::size_t workers = 1;
};

struct ScanEntry {
    std::string id_a;
    std::string id_b;
    int lag = 0;
    std::optional<CointegrationResult> result;
    std::string error;  // non-empty when the pair failed

    std::string pair_id() const { return id_a + "__" + id_b; }
    bool failed() const { return !result.has_value(); }
    bool cointegrated() const { return result && result->cointegrated(); }
};

/// All C(n, 2) pair tests in universe order (i < j).
struct ScanReport {
    std::vector<ScanEntry> entries;

    std::size_t pairs_tested() const { return entries.size(); }

    std::vector<ScanEntry> cointegrated() const {
        std::vector<ScanEntry> out;
        for (const auto& e : entries) {
            if (e.cointegrated()) out.push_back(e);
        }
        return out;
    }

    std::vector<ScanEntry> failures() const {
        std::vector<ScanEntry> out;
        for (const auto& e : entries) {
            if (e.failed()) out.push_back(e);
        }
        return out;
    }
};

inline std::size_t resolve_split_index(std::size_t length, const ScanOptions& options) {
    if (options.split_index) return *options.split_index;
    if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
        throw DomainError("train fraction must lie in (0, 1)");
    }
    return static_cast<std::size_t>(
        std::floor(options.train_fraction * static_cast<double>(length)));
}

/// Lag selection, VECM fit and Johansen test on the training segment of one pair.
inline std::pair<int, CointegrationResult> test_pair(std::span<const double> train_a,
                                                     std::span<const double> train_b,
                                                     int max_lag) {
    const int lag = select_lag(train_a, train_b, max_lag);
    return {lag, johansen_test(fit_vecm(train_a, train_b, lag))};
}

/// Tests every unordered pair on its training segment only. Per-pair failures
/// are recorded in the entry rather than aborting the scan.
inline ScanReport scan_pairs(std::span<const PriceSeries> universe, const ScanOptions& options = {}) {
    ScanReport report;
    if (universe.size() < 2) return report;
    for (std::size_t i = 0; i < universe.size(); ++i) {
        for (std::size_t j = i + 1; j < universe.size(); ++j) {
            report.entries.push_back(
                ScanEntry{universe[i].commodity_id, universe[j].commodity_id, 0, std::nullopt, {}});
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> index;
    for (std::size_t i = 0; i < universe.size(); ++i) {
        for (std::size_t j = i + 1; j < universe.size(); ++j) index.emplace_back(i, j);
    }

    detail::parallel_for(index.size(), options.workers, [&](std::size_t k) {
        const auto& a = universe[index[k].first];
        const auto& b = universe[index[k].second];
        auto& entry = report.entries[k];
        try {
            const PairDataset pair = split_at(a, b, resolve_split_index(a.size(), options));
            const std::span<const double> train_a(a.log_prices.data(), pair.split_index);
            const std::span<const double> train_b(b.log_prices.data(), pair.split_index);
            auto [lag, result] = test_pair(train_a, train_b, options.max_lag);
            entry.lag = lag;
            entry.result = result;
        } catch (const std::exception& e) {
            entry.error = e.what();
        }
    });
    return report;
}

}  // namespace stochspread
