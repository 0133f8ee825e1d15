#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "stochspread/date.hpp"
#include "stochspread/error.hpp"
#include "stochspread/market_data.hpp"

namespace stochspread {

/// Latent Ornstein-Uhlenbeck spread d(zeta) = kappa (mu - zeta) dt + sigma dB,
/// observed as s_t = zeta_t + v w_t. Time unit is one trading day.
struct OUParams {
    double kappa = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
    double v = 0.0;

    void validate() const {
        if (!(kappa > 0.0 && kappa < 1.0)) {
            throw DomainError("kappa must lie in (0, 1), got " + std::to_string(kappa));
        }
        if (!std::isfinite(mu)) throw DomainError("mu must be finite");
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("sigma must be >= 0");
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("v must be >= 0");
    }

    friend bool operator==(const OUParams&, const OUParams&) = default;
};

/// Discrete transition zeta_t = x + y zeta_{t-1} + z eps_t with measurement
/// s_t = zeta_t + v w_t, subject to x >= 0, 0 < y < 1, z >= 0.
struct StateSpaceParams {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double v = 0.0;

    void validate() const {
        if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("X must be >= 0");
        if (!(y > 0.0 && y < 1.0)) throw DomainError("Y must lie in (0, 1)");
        if (!(z >= 0.0) || !std::isfinite(z)) throw DomainError("Z must be >= 0");
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("V must be >= 0");
    }

    friend bool operator==(const StateSpaceParams&, const StateSpaceParams&) = default;
};

/// Daily-step mapping X = kappa mu, Y = 1 - kappa, Z = sigma. This is the
/// Euler discretisation of the OU drift and the exact inverse of
/// from_statespace.
inline StateSpaceParams to_statespace(const OUParams& p) {
    p.validate();
    const StateSpaceParams out{p.kappa * p.mu, 1.0 - p.kappa, p.sigma, p.v};
    try {
        out.validate();
    } catch (const DomainError& e) {
        throw DomainError(std::string("state-space constraint violated: ") + e.what());
    }
    return out;
}

/// kappa = 1 - Y, mu = X / kappa, sigma = Z.
inline OUParams from_statespace(const StateSpaceParams& p) {
    if (!(p.y < 1.0)) {
        throw DomainError("Y >= 1 implies non-positive kappa");
    }
    const double kappa = 1.0 - p.y;
    return OUParams{kappa, p.x / kappa, p.z, p.v};
}

struct HalfLife {
    double days = 0.0;             // ln(2) / kappa
    double inverse_kappa = 0.0;  // 1 / kappa
};

inline HalfLife half_life(const OUParams& p) {
    if (!(p.kappa > 0.0)) {
        throw DomainError("half-life needs kappa > 0");
    }
    return HalfLife{std::numbers::ln2 / p.kappa, 1.0 / p.kappa};
}

/// s_t = log P_a(t) + hedge_ratio * log P_b(t).
struct SpreadSeries {
    std::vector<Date> dates;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

inline SpreadSeries build_spread(const PriceSeries& a, const PriceSeries& b, double hedge_ratio) {
    if (!std::isfinite(hedge_ratio)) {
        throw DomainError("hedge ratio must be finite");
    }
    if (a.dates != b.dates) {
        throw DomainError(a.commodity_id + " and " + b.commodity_id +
                          " do not share a date vector");
    }
    SpreadSeries out{a.dates, std::vector<double>(a.size())};
    for (std::size_t t = 0; t < a.size(); ++t) {
        out.values[t] = a.log_prices[t] + hedge_ratio * b.log_prices[t];
    }
    return out;
}

inline SpreadSeries build_spread(const PairDataset& pair, double hedge_ratio) {
    return build_spread(pair.series_a, pair.series_b, hedge_ratio);
}

inline SpreadSeries slice(const SpreadSeries& s, std::size_t begin, std::size_t end) {
    const auto b = static_cast<std::ptrdiff_t>(begin);
    const auto e = static_cast<std::ptrdiff_t>(end);
    return SpreadSeries{{s.dates.begin() + b, s.dates.begin() + e},
                        {s.values.begin() + b, s.values.begin() + e}};
}

struct KalmanOutput {
    std::vector<double> filtered_means;
    std::vector<double> filtered_variances;
    std::vector<double> smoothed_means;
    std::vector<double> smoothed_variances;
    double log_likelihood = 0.0;
};

/// Prior on the first latent state: mean = first observation, variance = the
/// stationary variance Z^2 / (1 - Y^2), or 10x the sample variance of the
/// spread when Y is within 1e-6 of 1.
inline double initial_state_variance(std::span<const double> spread, const StateSpaceParams& p) {
    if (1.0 - p.y < 1e-6) {
        const double n = static_cast<double>(spread.size());
        const double mean = std::accumulate(spread.begin(), spread.end(), 0.0) / n;
        double ss = 0.0;
        for (double s : spread) ss += (s - mean) * (s - mean);
        return 10.0 * ss / (n - 1.0);
    }
    return p.z * p.z / (1.0 - p.y * p.y);
}

namespace detail {

inline void check_filter_inputs(std::span<const double> spread, const StateSpaceParams& p) {
    if (spread.size() < 2) throw DomainError("Kalman filter needs at least 2 observations");
    p.validate();
    if (p.z == 0.0 && p.v == 0.0) throw DomainError("Z and V cannot both be zero");
}

/// Forward filtering pass. on_step(t, predicted_mean, predicted_var,
/// filtered_mean, filtered_var) sees every step; returns the log-likelihood.
template <typename OnStep>
double filter_pass(std::span<const double> spread, const StateSpaceParams& p, OnStep&& on_step) {
    constexpr double log_2pi = 1.8378770664093454835606594728112;  // ln(2 pi)
    const double v2 = p.v * p.v;
    const double z2 = p.z * p.z;
    double mean = spread[0];
    double var = initial_state_variance(spread, p);
    double ll = 0.0;
    for (std::size_t t = 0; t < spread.size(); ++t) {
        if (t > 0) {
            mean = p.x + p.y * mean;
            var = p.y * p.y * var + z2;
        }
        const double pred_mean = mean;
        const double pred_var = var;
        const double f = var + v2;
        if (!(f > 0.0) || !std::isfinite(f)) {
            throw NumericalError("zero predictive variance at step " + std::to_string(t));
        }
        const double e = spread[t] - mean;
        ll -= 0.5 * (log_2pi + std::log(f) + e * e / f);
        if (p.v == 0.0) {
            mean = spread[t];
            var = 0.0;
        } else {
            mean += (var / f) * e;
            var = var * v2 / f;
        }
        on_step(t, pred_mean, pred_var, mean, var);
    }
    return ll;
}

}  // namespace detail

/// Log-likelihood only; the optimisation objective.
inline double kalman_log_likelihood(std::span<const double> spread, const StateSpaceParams& p) {
    detail::check_filter_inputs(spread, p);
    return detail::filter_pass(spread, p, [](std::size_t, double, double, double, double) {});
}

/// Scalar Kalman filter with a fixed-interval (Rauch-Tung-Striebel) smoother.
/// The log-likelihood sums the one-step-ahead predictive Gaussian densities.
inline KalmanOutput kalman_filter(std::span<const double> spread, const StateSpaceParams& p) {
    detail::check_filter_inputs(spread, p);
    const std::size_t n = spread.size();
    KalmanOutput out;
    out.filtered_means.resize(n);
    out.filtered_variances.resize(n);
    std::vector<double> pred_means(n);
    std::vector<double> pred_vars(n);
    out.log_likelihood = detail::filter_pass(
        spread, p, [&](std::size_t t, double pm, double pv, double fm, double fv) {
            pred_means[t] = pm;
            pred_vars[t] = pv;
            out.filtered_means[t] = fm;
            out.filtered_variances[t] = fv;
        });

    out.smoothed_means = out.filtered_means;
    out.smoothed_variances = out.filtered_variances;
    for (std::size_t t = n - 1; t-- > 0;) {
        const double next_pred = pred_vars[t + 1];
        if (next_pred <= 0.0) continue;  // degenerate transition: nothing to propagate
        const double j = out.filtered_variances[t] * p.y / next_pred;
        out.smoothed_means[t] =
            out.filtered_means[t] + j * (out.smoothed_means[t + 1] - pred_means[t + 1]);
        const double sv = out.filtered_variances[t] +
                          j * j * (out.smoothed_variances[t + 1] - next_pred);
        out.smoothed_variances[t] = std::clamp(sv, 0.0, out.filtered_variances[t]);
    }
    return out;
}

inline KalmanOutput kalman_filter(const SpreadSeries& spread, const StateSpaceParams& p) {
    return kalman_filter(std::span<const double>(spread.values), p);
}

}  // namespace stochspread
