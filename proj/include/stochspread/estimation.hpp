#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stochspread/error.hpp"
#include "stochspread/parallel.hpp"
#include "stochspread/rng.hpp"
#include "stochspread/spread_model.hpp"

namespace stochspread {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Fitness assigned to candidates whose objective fails numerically.
inline constexpr double kFailedFitness = -1e300;

struct DeConfig {
    int population_size = 40;
    int max_generations = 500;
    double differential_weight = 0.8;  // F
    double crossover_rate = 0.9;       // CR
    std::uint64_t seed = 0;
    std::vector<Interval> bounds;
    /// Stop once best fitness improves by no more than this over the stall window.
    double tolerance = 1e-8;
    int stall_generations = 20;
    std::size_t workers = 1;
};

struct DeResult {
    std::vector<double> best;
    double best_fitness = kFailedFitness;
    int generations_run = 0;
    bool converged = false;
    /// Best-so-far fitness; entry 0 is the initial population, entry g is
    /// generation g.
    std::vector<double> fitness_history;
    std::size_t evaluations = 0;
    std::size_t failed_evaluations = 0;
};

namespace detail {

/// Folds x back into [lo, hi] by mirror reflection at the walls.
inline double reflect_into(double x, const Interval& box) {
    const double w = box.width();
    if (w <= 0.0) return box.lo;
    if (box.contains(x)) return x;
    double d = std::fmod(x - box.lo, 2.0 * w);
    if (d < 0.0) d += 2.0 * w;
    const double folded = d <= w ? box.lo + d : box.lo + (2.0 * w - d);
    return std::clamp(folded, box.lo, box.hi);
}

inline void validate(const DeConfig& config) {
    if (config.population_size < 4) {
        throw ConfigError("differential evolution needs a population of at least 4");
    }
    if (config.max_generations < 1) throw ConfigError("max_generations must be >= 1");
    if (!(config.differential_weight > 0.0 && config.differential_weight <= 2.0)) {
        throw ConfigError("differential weight must lie in (0, 2]");
    }
    if (!(config.crossover_rate >= 0.0 && config.crossover_rate <= 1.0)) {
        throw ConfigError("crossover rate must lie in [0, 1]");
    }
    if (!(config.tolerance >= 0.0)) throw ConfigError("tolerance must be >= 0");
    if (config.stall_generations < 1) throw ConfigError("stall window must be >= 1");
    if (config.bounds.empty()) throw ConfigError("no search bounds given");
    for (const auto& b : config.bounds) {
        if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || b.lo > b.hi) {
            throw ConfigError("search bounds must be finite nonempty intervals");
        }
    }
}

}  // namespace detail

/// Maximises `objective` over the box with classic DE/rand/1/bin.
///
/// Each member i of generation g draws from its own stream
/// Rng::derive(seed, {g, i}), so results are identical whatever the
/// evaluation order or worker count. Selection keeps the trial when it is at
/// least as fit as the target. Non-finite objective values count as failures
/// and score kFailedFitness.
template <typename Objective>
DeResult de_optimize(Objective&& objective, const DeConfig& config) {
    detail::validate(config);
    const std::size_t dim = config.bounds.size();
    const auto pop = static_cast<std::size_t>(config.population_size);

    std::vector<std::vector<double>> members(pop, std::vector<double>(dim));
    std::vector<double> fitness(pop);
    std::vector<unsigned char> failed(pop);

    DeResult result;
    const auto evaluate_all = [&](std::vector<std::vector<double>>& candidates,
                                  std::vector<double>& scores) {
        detail::parallel_for(pop, config.workers, [&](std::size_t i) {
            const double f = objective(std::span<const double>(candidates[i]));
            failed[i] = std::isfinite(f) ? 0 : 1;
            scores[i] = failed[i] ? kFailedFitness : f;
        });
        result.evaluations += pop;
        result.failed_evaluations +=
            static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
    };

    for (std::size_t i = 0; i < pop; ++i) {
        Rng rng = Rng::derive(config.seed, {0, i});
        for (std::size_t d = 0; d < dim; ++d) {
            members[i][d] = rng.uniform(config.bounds[d].lo, config.bounds[d].hi);
        }
    }
    evaluate_all(members, fitness);

    std::size_t best_index = 0;
    const auto update_best = [&] {
        for (std::size_t i = 0; i < pop; ++i) {
            if (fitness[i] > fitness[best_index]) best_index = i;
        }
        result.fitness_history.push_back(fitness[best_index]);
    };
    update_best();

    std::vector<std::vector<double>> trials(pop, std::vector<double>(dim));
    std::vector<double> trial_fitness(pop);
    for (int g = 1; g <= config.max_generations; ++g) {
        for (std::size_t i = 0; i < pop; ++i) {
            Rng rng = Rng::derive(config.seed, {static_cast<std::uint64_t>(g), i});
            std::size_t r1, r2, r3;
            do r1 = rng.below(pop); while (r1 == i);
            do r2 = rng.below(pop); while (r2 == i || r2 == r1);
            do r3 = rng.below(pop); while (r3 == i || r3 == r1 || r3 == r2);
            const std::size_t forced = rng.below(dim);
            for (std::size_t d = 0; d < dim; ++d) {
                if (d == forced || rng.uniform() < config.crossover_rate) {
                    const double mutant =
                        members[r1][d] +
                        config.differential_weight * (members[r2][d] - members[r3][d]);
                    trials[i][d] = detail::reflect_into(mutant, config.bounds[d]);
                } else {
                    trials[i][d] = members[i][d];
                }
            }
        }
        evaluate_all(trials, trial_fitness);
        for (std::size_t i = 0; i < pop; ++i) {
            if (trial_fitness[i] >= fitness[i]) {
                members[i] = trials[i];
                fitness[i] = trial_fitness[i];
            }
        }
        update_best();
        result.generations_run = g;

        const auto window = static_cast<std::size_t>(config.stall_generations);
        const std::size_t last = result.fitness_history.size() - 1;
        if (last >= window &&
            result.fitness_history[last] - result.fitness_history[last - window] <=
                config.tolerance) {
            result.converged = true;
            break;
        }
    }

    result.best = members[best_index];
    result.best_fitness = fitness[best_index];
    return result;
}

/// Default (X, Y, Z, V) search box.
inline std::vector<Interval> default_spread_bounds() {
    return {{0.0, 1.0}, {1e-6, 1.0 - 1e-6}, {1e-8, 1.0}, {0.0, 1.0}};
}

struct FitResult {
    StateSpaceParams best_params;
    OUParams ou_params;
    double log_likelihood = 0.0;
    int generations_run = 0;
    bool converged = false;
    std::vector<double> fitness_history;
    /// Zero-variance input, or Z and V both driven to their lower bounds; the
    /// likelihood is then unbounded and the estimate meaningless.
    bool degenerate = false;
};

struct FitOptions {
    std::size_t min_spread_length = 30;
};

/// Maximum-likelihood fit of (X, Y, Z, V) by differential evolution on the
/// Kalman log-likelihood, then recovery of (kappa, mu, sigma).
inline FitResult fit_spread_model(std::span<const double> spread, DeConfig config,
                                  const FitOptions& options = {}) {
    if (spread.size() < options.min_spread_length) {
        throw DomainError("spread length " + std::to_string(spread.size()) +
                          " below the minimum of " + std::to_string(options.min_spread_length));
    }
    if (config.bounds.empty()) config.bounds = default_spread_bounds();
    if (config.bounds.size() != 4) {
        throw ConfigError("spread model bounds need 4 intervals (X, Y, Z, V)");
    }
    const auto& b = config.bounds;
    if (b[0].lo < 0.0 || b[1].lo <= 0.0 || b[1].hi >= 1.0 || b[2].lo < 0.0 || b[3].lo < 0.0) {
        throw ConfigError("bounds violate X >= 0, 0 < Y < 1, Z >= 0, V >= 0");
    }

    const auto objective = [spread](std::span<const double> theta) {
        try {
            return kalman_log_likelihood(spread,
                                         StateSpaceParams{theta[0], theta[1], theta[2], theta[3]});
        } catch (const Error&) {
            return kFailedFitness;
        }
    };
    const DeResult de = de_optimize(objective, config);
    if (de.best_fitness <= kFailedFitness) {
        throw EstimationFailedError("every likelihood evaluation failed numerically");
    }

    FitResult fit;
    fit.best_params = StateSpaceParams{de.best[0], de.best[1], de.best[2], de.best[3]};
    fit.ou_params = from_statespace(fit.best_params);
    fit.log_likelihood = de.best_fitness;
    fit.generations_run = de.generations_run;
    fit.converged = de.converged;
    fit.fitness_history = de.fitness_history;

    const double n = static_cast<double>(spread.size());
    double mean = 0.0;
    for (double s : spread) mean += s;
    mean /= n;
    double ss = 0.0;
    for (double s : spread) ss += (s - mean) * (s - mean);
    const auto near_floor = [](double x, const Interval& box) {
        return x - box.lo <= 1e-6 * std::max(box.width(), 1e-300);
    };
    fit.degenerate = ss == 0.0 || (near_floor(fit.best_params.z, b[2]) &&
                                   near_floor(fit.best_params.v, b[3]));
    return fit;
}

inline FitResult fit_spread_model(const SpreadSeries& spread, const DeConfig& config,
                                  const FitOptions& options = {}) {
    return fit_spread_model(std::span<const double>(spread.values), config, options);
}

}  // namespace stochspread
