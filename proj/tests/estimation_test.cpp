#include "stochspread/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "stochspread/rng.hpp"
#include "stochspread/simulate.hpp"

namespace {

using namespace stochspread;

double neg_sphere(std::span<const double> x, double centre) {
    double s = 0.0;
    for (double v : x) s += (v - centre) * (v - centre);
    return -s;
}

DeConfig box(std::size_t dim, double lo, double hi) {
    DeConfig c;
    c.bounds.assign(dim, Interval{lo, hi});
    return c;
}

TEST(ReflectTest, FoldsIntoBox) {
    const Interval b{0.0, 1.0};
    EXPECT_DOUBLE_EQ(detail::reflect_into(0.25, b), 0.25);
    EXPECT_DOUBLE_EQ(detail::reflect_into(1.25, b), 0.75);
    EXPECT_DOUBLE_EQ(detail::reflect_into(-0.25, b), 0.25);
    EXPECT_DOUBLE_EQ(detail::reflect_into(2.25, b), 0.25);
    EXPECT_DOUBLE_EQ(detail::reflect_into(5.0, Interval{2.0, 2.0}), 2.0);
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(-100.0, 100.0);
        const double r = detail::reflect_into(x, Interval{-1.0, 3.0});
        EXPECT_GE(r, -1.0);
        EXPECT_LE(r, 3.0);
    }
}

TEST(DeTest, QuadraticOptimum) {
    DeConfig c = box(3, -5.0, 5.0);
    c.population_size = 16;
    c.max_generations = 200;
    c.tolerance = 0.0;
    c.seed = 3;
    const auto r = de_optimize([](std::span<const double> x) { return neg_sphere(x, 1.5); }, c);
    ASSERT_EQ(r.best.size(), 3u);
    for (double v : r.best) EXPECT_NEAR(v, 1.5, 1e-6);
    EXPECT_NEAR(r.best_fitness, 0.0, 1e-11);
}

TEST(DeTest, Rosenbrock) {
    DeConfig c = box(2, -2.0, 2.0);
    c.seed = 8;
    c.tolerance = 0.0;
    c.stall_generations = 100;
    const auto r = de_optimize(
        [](std::span<const double> x) {
            return -(100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2));
        },
        c);
    EXPECT_NEAR(r.best[0], 1.0, 1e-3);
    EXPECT_NEAR(r.best[1], 1.0, 1e-3);
}

TEST(DeTest, ConstantObjectiveStopsAfterStallWindow) {
    DeConfig c = box(2, 0.0, 1.0);
    const auto r = de_optimize([](std::span<const double>) { return 7.0; }, c);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.generations_run, c.stall_generations);
    EXPECT_EQ(r.fitness_history.size(), static_cast<std::size_t>(c.stall_generations) + 1);
    EXPECT_EQ(r.best_fitness, 7.0);
}

TEST(DeTest, BeatsRandomSearchOnEqualBudget) {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        DeConfig c = box(4, -3.0, 3.0);
        c.population_size = 20;
        c.max_generations = 100;
        c.tolerance = 0.0;
        c.stall_generations = 100;
        c.seed = seed;
        const auto f = [](std::span<const double> x) { return neg_sphere(x, 0.7); };
        const auto de = de_optimize(f, c);

        Rng rng(100 + seed);
        double best = -1e300;
        std::vector<double> x(4);
        for (std::size_t k = 0; k < de.evaluations; ++k) {
            for (auto& v : x) v = rng.uniform(-3.0, 3.0);
            best = std::max(best, f(x));
        }
        if (de.best_fitness > best) ++wins;
    }
    EXPECT_EQ(wins, 10);
}

TEST(DeTest, DeterministicAcrossRunsAndWorkers) {
    DeConfig c = box(3, -1.0, 1.0);
    c.seed = 17;
    c.max_generations = 60;
    const auto f = [](std::span<const double> x) { return -std::abs(x[0] - 0.3) - x[1] * x[1] + x[2]; };
    const auto a = de_optimize(f, c);
    const auto b = de_optimize(f, c);
    c.workers = 4;
    const auto d = de_optimize(f, c);
    EXPECT_EQ(a.best, b.best);
    EXPECT_EQ(a.fitness_history, b.fitness_history);
    EXPECT_EQ(a.best, d.best);
    EXPECT_EQ(a.fitness_history, d.fitness_history);
    c.seed = 18;
    EXPECT_NE(de_optimize(f, c).best, a.best);
}

TEST(DeTest, EvaluatesOnlyFeasiblePointsAndHistoryIsMonotone) {
    DeConfig c;
    c.bounds = {{0.0, 1.0}, {-5.0, -4.0}, {10.0, 10.5}};
    c.seed = 2;
    c.max_generations = 100;
    bool feasible = true;
    const auto r = de_optimize(
        [&](std::span<const double> x) {
            for (std::size_t d = 0; d < x.size(); ++d) {
                if (!c.bounds[d].contains(x[d])) feasible = false;
            }
            return x[0] - x[1] * x[1] + std::sin(x[2]);
        },
        c);
    EXPECT_TRUE(feasible);
    for (std::size_t g = 1; g < r.fitness_history.size(); ++g) {
        EXPECT_GE(r.fitness_history[g], r.fitness_history[g - 1]);
    }
    EXPECT_EQ(r.fitness_history.size(), static_cast<std::size_t>(r.generations_run) + 1);
    EXPECT_EQ(r.evaluations, static_cast<std::size_t>(c.population_size) *
                                 static_cast<std::size_t>(r.generations_run + 1));
}

TEST(DeTest, NonFiniteObjectiveCountsAsFailure) {
    DeConfig c = box(1, -1.0, 1.0);
    c.seed = 4;
    c.max_generations = 50;
    const auto r = de_optimize(
        [](std::span<const double> x) { return x[0] < 0.0 ? std::nan("") : -x[0]; }, c);
    EXPECT_GT(r.failed_evaluations, 0u);
    EXPECT_GE(r.best[0], 0.0);
    EXPECT_NEAR(r.best[0], 0.0, 1e-3);

    const auto all_bad = de_optimize([](std::span<const double>) { return INFINITY; }, c);
    EXPECT_EQ(all_bad.best_fitness, kFailedFitness);
}

TEST(DeTest, RejectsBadConfig) {
    const auto f = [](std::span<const double>) { return 0.0; };
    DeConfig c = box(2, 0.0, 1.0);
    c.population_size = 3;
    EXPECT_THROW(de_optimize(f, c), ConfigError);
    c = box(2, 0.0, 1.0);
    c.crossover_rate = 1.5;
    EXPECT_THROW(de_optimize(f, c), ConfigError);
    c = box(2, 0.0, 1.0);
    c.differential_weight = 0.0;
    EXPECT_THROW(de_optimize(f, c), ConfigError);
    c = box(2, 1.0, 0.0);
    EXPECT_THROW(de_optimize(f, c), ConfigError);
    c = DeConfig{};
    EXPECT_THROW(de_optimize(f, c), ConfigError);
}

SimulatedSpread simulated(std::uint64_t seed, std::size_t n, double v) {
    SimSpec spec;
    spec.ou = OUParams{0.1, 0.5, 0.02, v};
    spec.length = n;
    spec.seed = seed;
    spec.initial_state = 0.5;
    return simulate_ou_spread(spec);
}

TEST(FitTest, RecoversSimulatedParameters) {
    const auto sim = simulated(5, 2000, 0.0);
    DeConfig c;
    c.seed = 1;
    const FitResult fit = fit_spread_model(sim.spread, c);
    EXPECT_NEAR(fit.ou_params.mu, 0.5, 0.025);
    EXPECT_NEAR(fit.ou_params.kappa, 0.1, 0.03);
    EXPECT_NEAR(fit.ou_params.sigma, 0.02, 0.006);
    EXPECT_LT(fit.ou_params.v, 0.01);
    EXPECT_FALSE(fit.degenerate);
    EXPECT_NEAR(fit.best_params.x, fit.ou_params.kappa * fit.ou_params.mu, 1e-12);
    // A maximiser cannot be worse than the truth.
    EXPECT_GE(fit.log_likelihood,
              kalman_log_likelihood(sim.spread.values, to_statespace(OUParams{0.1, 0.5, 0.02, 0.0})));
    EXPECT_EQ(fit.log_likelihood, kalman_log_likelihood(sim.spread.values, fit.best_params));
}

TEST(FitTest, MeasurementNoiseCase) {
    const auto sim = simulated(6, 3000, 0.01);
    DeConfig c;
    c.seed = 2;
    const FitResult fit = fit_spread_model(sim.spread, c);
    EXPECT_NEAR(fit.ou_params.mu, 0.5, 0.025);
    EXPECT_GT(fit.ou_params.v, 0.002);
    EXPECT_LT(fit.ou_params.v, 0.02);
}

TEST(FitTest, DeterministicForFixedSeed) {
    const auto sim = simulated(7, 300, 0.0);
    DeConfig c;
    c.seed = 9;
    c.max_generations = 100;
    const auto a = fit_spread_model(sim.spread, c);
    const auto b = fit_spread_model(sim.spread, c);
    EXPECT_EQ(a.best_params.x, b.best_params.x);
    EXPECT_EQ(a.best_params.y, b.best_params.y);
    EXPECT_EQ(a.best_params.z, b.best_params.z);
    EXPECT_EQ(a.best_params.v, b.best_params.v);
    EXPECT_EQ(a.fitness_history, b.fitness_history);
}

TEST(FitTest, ConstantSpreadIsFlaggedDegenerate) {
    const std::vector<double> flat(60, 0.25);
    DeConfig c;
    c.max_generations = 50;
    const FitResult fit = fit_spread_model(flat, c);
    EXPECT_TRUE(fit.degenerate);
}

TEST(FitTest, RejectsShortSpreadsAndBadBounds) {
    const std::vector<double> short_spread(29, 0.1);
    EXPECT_THROW(fit_spread_model(short_spread, DeConfig{}), DomainError);
    FitOptions relaxed;
    relaxed.min_spread_length = 10;
    DeConfig quick;
    quick.max_generations = 5;
    EXPECT_NO_THROW(fit_spread_model(short_spread, quick, relaxed));

    const auto sim = simulated(1, 100, 0.0);
    DeConfig c;
    c.bounds = {{-1.0, 1.0}, {0.1, 0.9}, {0.0, 1.0}, {0.0, 1.0}};
    EXPECT_THROW(fit_spread_model(sim.spread, c), ConfigError);
    c.bounds = {{0.0, 1.0}, {0.1, 1.0}, {0.0, 1.0}, {0.0, 1.0}};
    EXPECT_THROW(fit_spread_model(sim.spread, c), ConfigError);
    c.bounds = {{0.0, 1.0}, {0.1, 0.9}};
    EXPECT_THROW(fit_spread_model(sim.spread, c), ConfigError);
}

TEST(FitTest, EstimatesRespectBounds) {
    const auto sim = simulated(8, 200, 0.0);
    DeConfig c;
    c.max_generations = 80;
    c.bounds = {{0.0, 0.02}, {0.5, 0.99}, {0.001, 0.5}, {0.0, 0.5}};
    const FitResult fit = fit_spread_model(sim.spread, c);
    EXPECT_TRUE(c.bounds[0].contains(fit.best_params.x));
    EXPECT_TRUE(c.bounds[1].contains(fit.best_params.y));
    EXPECT_TRUE(c.bounds[2].contains(fit.best_params.z));
    EXPECT_TRUE(c.bounds[3].contains(fit.best_params.v));
}

}  // namespace
