#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stochspread/date.hpp"
#include "stochspread/error.hpp"
#include "stochspread/market_data.hpp"
#include "stochspread/rng.hpp"
#include "stochspread/spread_model.hpp"

namespace stochspread {

struct SimSpec {
    OUParams ou;
    std::size_t length = 2;
    std::uint64_t seed = 0;
    double initial_state = 0.0;
    double beta = 1.0;
    double walk_volatility = 0.0;
    double initial_level = 0.0;  // starting log price of the common factor
    Date start = make_date(2010, 1, 4);

    void validate() const {
        ou.validate();
        if (length < 2) throw DomainError("simulation length must be >= 2");
        if (!(walk_volatility >= 0.0)) throw DomainError("walk volatility must be >= 0");
        if (!std::isfinite(initial_state) || !std::isfinite(initial_level)) {
            throw DomainError("initial values must be finite");
        }
    }
};

/// Consecutive Monday-to-Friday dates starting at (or after) `start`.
inline std::vector<Date> business_days(Date start, std::size_t count) {
    std::vector<Date> out;
    out.reserve(count);
    const std::chrono::weekday wd{start};
    Date d = (wd == std::chrono::Saturday || wd == std::chrono::Sunday) ? next_business_day(start)
                                                                        : start;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(d);
        d = next_business_day(d);
    }
    return out;
}

struct SimulatedSpread {
    SpreadSeries spread;
    std::vector<double> latent;
    /// eps_t of the transition; entry 0 is unused (the path starts at initial_state).
    std::vector<double> transition_shocks;
    std::vector<double> measurement_shocks;
};

/// zeta_0 = initial_state, zeta_t = X + Y zeta_{t-1} + Z eps_t, s_t = zeta_t + V w_t
/// with X = kappa mu, Y = 1 - kappa, Z = sigma. Draws come from the stream
/// Rng::derive(seed, {1}); per step eps_t (t > 0) then w_t.
inline SimulatedSpread simulate_ou_spread(const SimSpec& spec) {
    spec.validate();
    const double x = spec.ou.kappa * spec.ou.mu;
    const double y = 1.0 - spec.ou.kappa;
    const double z = spec.ou.sigma;
    const std::size_t n = spec.length;

    SimulatedSpread out;
    out.spread.dates = business_days(spec.start, n);
    out.spread.values.resize(n);
    out.latent.resize(n);
    out.transition_shocks.assign(n, 0.0);
    out.measurement_shocks.resize(n);

    Rng rng = Rng::derive(spec.seed, {1});
    double state = spec.initial_state;
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0) {
            out.transition_shocks[t] = rng.normal();
            state = x + y * state + z * out.transition_shocks[t];
        }
        out.measurement_shocks[t] = rng.normal();
        out.latent[t] = state;
        out.spread.values[t] = state + spec.ou.v * out.measurement_shocks[t];
    }
    return out;
}

/// Gaussian random walk in log prices, stream Rng::derive(seed, {2}).
inline PriceSeries simulate_random_walk(std::string id, std::size_t length, double volatility,
                                        std::uint64_t seed, double initial_level = 0.0,
                                        Date start = make_date(2010, 1, 4)) {
    if (length < 2) throw DomainError("simulation length must be >= 2");
    PriceSeries out{std::move(id), business_days(start, length), std::vector<double>(length)};
    Rng rng = Rng::derive(seed, {2});
    double level = initial_level;
    for (std::size_t t = 0; t < length; ++t) {
        if (t > 0) level += volatility * rng.normal();
        out.log_prices[t] = level;
    }
    return out;
}

struct SimulatedPair {
    PriceSeries series_a;
    PriceSeries series_b;
    double hedge_ratio = 0.0;  // -beta
    std::vector<double> common_factor;
    std::vector<double> latent_spread;
};

/// log P_a = m_t, log P_b = (m_t - zeta_t) / beta, with m a random walk of step
/// scale walk_volatility and zeta the latent OU path. Then
/// log P_a - beta log P_b = zeta_t, so the true hedge ratio is -beta.
inline SimulatedPair simulate_cointegrated_pair(const SimSpec& spec, std::string id_a = "A",
                                                std::string id_b = "B") {
    spec.validate();
    if (spec.beta == 0.0 || !std::isfinite(spec.beta)) {
        throw DomainError("beta must be finite and nonzero");
    }
    const SimulatedSpread ou = simulate_ou_spread(spec);
    const PriceSeries walk =
        simulate_random_walk(id_a, spec.length, spec.walk_volatility, spec.seed,
                             spec.initial_level, spec.start);

    SimulatedPair out;
    out.hedge_ratio = -spec.beta;
    out.common_factor = walk.log_prices;
    out.latent_spread = ou.latent;
    out.series_a = PriceSeries{std::move(id_a), walk.dates, walk.log_prices};
    out.series_b = PriceSeries{std::move(id_b), walk.dates, std::vector<double>(spec.length)};
    for (std::size_t t = 0; t < spec.length; ++t) {
        out.series_b.log_prices[t] = (walk.log_prices[t] - ou.latent[t]) / spec.beta;
    }
    return out;
}

}  // namespace stochspread
