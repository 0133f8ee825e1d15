#include "stochspread/cointegration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "stochspread/rng.hpp"
#include "stochspread/simulate.hpp"

namespace {

using namespace stochspread;

// 64-bit LCG with an Irwin-Hall normal approximation; easy to replicate in
// other environments, which is how the reference values below were produced.
class Lcg {
public:
    explicit Lcg(std::uint64_t s) : state_(s) {}
    double uniform() {
        state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(state_ >> 11) * 0x1.0p-53;
    }
    double gauss() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += uniform();
        return s - 6.0;
    }

private:
    std::uint64_t state_;
};

struct Pair {
    std::vector<double> a;
    std::vector<double> b;
};

Pair lcg_data(Pair* walks = nullptr) {
    Lcg g(12345);
    Pair p;
    double level = 4.0;
    double z = 0.0;
    for (int t = 0; t < 300; ++t) {
        level += 0.01 * g.gauss();
        z = 0.9 * z + 0.01 * g.gauss();
        p.a.push_back(level);
        p.b.push_back((level - z) / 0.7);
    }
    if (walks) {
        double l1 = 0.0;
        double l2 = 0.0;
        for (int t = 0; t < 300; ++t) {
            l1 += 0.01 * g.gauss();
            l2 += 0.01 * g.gauss();
            walks->a.push_back(l1);
            walks->b.push_back(l2);
        }
    }
    return p;
}

Pair random_walks(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    Pair p;
    double x = 0.0;
    double y = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        x += rng.normal();
        y += rng.normal();
        p.a.push_back(x);
        p.b.push_back(y);
    }
    return p;
}

Pair cointegrated(std::uint64_t seed, std::size_t n, double kappa, double beta) {
    SimSpec spec;
    spec.ou = OUParams{kappa, 0.5, 0.02, 0.0};
    spec.length = n;
    spec.seed = seed;
    spec.initial_state = 0.5;
    spec.beta = beta;
    spec.walk_volatility = 0.015;
    spec.initial_level = 4.6;
    const auto sim = simulate_cointegrated_pair(spec);
    return {sim.series_a.log_prices, sim.series_b.log_prices};
}

// Independent trace statistic: normal-equation OLS residuals and the
// eigenvalues of the non-symmetric product S11^-1 S10 S00^-1 S01.
std::array<double, 2> oracle_eigenvalues(const Pair& d, int p) {
    const int n = static_cast<int>(d.a.size());
    const int rows = n - p;
    const int k = 1 + 2 * (p - 1);
    Eigen::MatrixXd z(rows, k), dy(rows, 2), ylag(rows, 2);
    for (int r = 0; r < rows; ++r) {
        const int t = r + p;
        dy(r, 0) = d.a[t] - d.a[t - 1];
        dy(r, 1) = d.b[t] - d.b[t - 1];
        ylag(r, 0) = d.a[t - 1];
        ylag(r, 1) = d.b[t - 1];
        z(r, 0) = 1.0;
        for (int i = 1; i < p; ++i) {
            z(r, 2 * i - 1) = d.a[t - i] - d.a[t - i - 1];
            z(r, 2 * i) = d.b[t - i] - d.b[t - i - 1];
        }
    }
    const Eigen::MatrixXd ztz = z.transpose() * z;
    const Eigen::MatrixXd r0 = dy - z * ztz.ldlt().solve(z.transpose() * dy);
    const Eigen::MatrixXd r1 = ylag - z * ztz.ldlt().solve(z.transpose() * ylag);
    const Eigen::MatrixXd s00 = r0.transpose() * r0 / rows;
    const Eigen::MatrixXd s11 = r1.transpose() * r1 / rows;
    const Eigen::MatrixXd s01 = r0.transpose() * r1 / rows;
    const Eigen::MatrixXd m = s11.inverse() * s01.transpose() * s00.inverse() * s01;
    Eigen::EigenSolver<Eigen::MatrixXd> es(m);
    std::array<double, 2> ev{es.eigenvalues()(0).real(), es.eigenvalues()(1).real()};
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

CointegrationResult run(const Pair& d, int p) { return johansen_test(fit_vecm(d.a, d.b, p)); }

TEST(JohansenTest, MatchesStatsmodelsReference) {
    // p = 2, 3: statsmodels 0.14 coint_johansen(det_order=0, k_ar_diff=p-1) on
    // lcg_data(). p = 1: direct numpy/scipy computation with demeaned R0, R1,
    // because coint_johansen drops the constant when there are no lagged
    // differences.
    struct Row {
        int p;
        double trace0, trace1, eig0, eig1, hedge;
    };
    const Row rows[] = {
        {1, 26.078408146381626, 7.3133713879672415, 0.06083051444471496, 0.02416272809954234,
         -0.7866834384543082},
        {2, 25.884733505582084, 6.626605704453217, 0.06258068602683443, 0.021991513805171028,
         -0.7372318223023308},
        {3, 24.174813852664787, 7.402278459752973, 0.05490817145048117, 0.024615470493146514,
         -0.7071194397421079},
    };
    const Pair d = lcg_data();
    for (const auto& row : rows) {
        const auto r = run(d, row.p);
        EXPECT_NEAR(r.trace_statistics[0], row.trace0, 1e-6 * row.trace0) << row.p;
        EXPECT_NEAR(r.trace_statistics[1], row.trace1, 1e-6 * row.trace1) << row.p;
        EXPECT_NEAR(r.eigenvalues[0], row.eig0, 1e-9) << row.p;
        EXPECT_NEAR(r.eigenvalues[1], row.eig1, 1e-9) << row.p;
        EXPECT_EQ(r.rank, 2) << row.p;
        ASSERT_TRUE(r.hedge_ratio) << row.p;
        EXPECT_NEAR(*r.hedge_ratio, row.hedge, 1e-7) << row.p;
    }
}

TEST(JohansenTest, IndependentWalksReference) {
    Pair walks;
    lcg_data(&walks);
    const auto r = run(walks, 2);
    EXPECT_NEAR(r.trace_statistics[0], 4.381442896274991, 1e-6);
    EXPECT_NEAR(r.trace_statistics[1], 0.048082404528820843, 1e-6);
    EXPECT_EQ(r.rank, 0);
    EXPECT_FALSE(r.hedge_ratio);
    EXPECT_FALSE(r.cointegrated());
}

TEST(JohansenTest, AgreesWithNonSymmetricOracle) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Pair d = seed % 2 ? cointegrated(seed, 400, 0.1, 0.7) : random_walks(seed, 400);
        for (int p : {1, 2, 4}) {
            const auto r = run(d, p);
            const auto ev = oracle_eigenvalues(d, p);
            EXPECT_NEAR(r.eigenvalues[0], ev[0], 1e-9);
            EXPECT_NEAR(r.eigenvalues[1], std::max(ev[1], 0.0), 1e-9);
            const double t = static_cast<double>(400 - p);
            EXPECT_NEAR(r.trace_statistics[1], -t * std::log(1.0 - r.eigenvalues[1]), 1e-9);
        }
    }
}

TEST(JohansenTest, TraceStatisticsAreOrdered) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = run(random_walks(seed, 200), 1 + static_cast<int>(seed % 3));
        EXPECT_GE(r.eigenvalues[0], r.eigenvalues[1]);
        EXPECT_GE(r.eigenvalues[1], 0.0);
        EXPECT_LT(r.eigenvalues[0], 1.0);
        EXPECT_GE(r.trace_statistics[0], r.trace_statistics[1]);
        EXPECT_GE(r.trace_statistics[1], 0.0);
        EXPECT_EQ(r.critical_values_5pct, kTraceCritical5pct);
    }
}

TEST(JohansenTest, SwappingSeriesInvertsHedgeRatio) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Pair d = cointegrated(seed, 1000, 0.1, 0.7);
        const auto forward = run(d, 2);
        const auto reverse = run(Pair{d.b, d.a}, 2);
        ASSERT_TRUE(forward.hedge_ratio);
        ASSERT_TRUE(reverse.hedge_ratio);
        EXPECT_NEAR(*forward.hedge_ratio * *reverse.hedge_ratio, 1.0, 1e-8);
        EXPECT_NEAR(forward.trace_statistics[0], reverse.trace_statistics[0], 1e-8);
        EXPECT_NEAR(forward.trace_statistics[1], reverse.trace_statistics[1], 1e-8);
    }
}

TEST(JohansenTest, ScaleAndShiftInvariance) {
    const Pair d = cointegrated(9, 800, 0.1, 0.7);
    const auto base = run(d, 2);
    Pair scaled = d;
    for (auto& x : scaled.b) x = 3.0 * x + 10.0;
    for (auto& x : scaled.a) x += -2.0;
    const auto r = run(scaled, 2);
    ASSERT_TRUE(base.hedge_ratio);
    ASSERT_TRUE(r.hedge_ratio);
    EXPECT_NEAR(*r.hedge_ratio, *base.hedge_ratio / 3.0, 1e-9);
    EXPECT_NEAR(r.trace_statistics[0], base.trace_statistics[0], 1e-7);
    EXPECT_NEAR(r.trace_statistics[1], base.trace_statistics[1], 1e-7);
}

TEST(JohansenTest, SmallSizeAndPowerCheck) {
    int rejections = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        if (run(random_walks(1000 + seed, 500), 1).rank >= 1) ++rejections;
    }
    EXPECT_LE(rejections, 15);

    int detected = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        if (run(cointegrated(seed, 1000, 0.1, 0.7), 1).rank >= 1) ++detected;
    }
    EXPECT_GE(detected, 18);
}

TEST(VecmTest, RecoversLongRunMatrix) {
    // dy_t = mu + A y_{t-1} + w with A = alpha beta', beta = (1, -0.7), alpha = (-0.1, 0.05).
    Rng rng(4);
    const std::size_t n = 20000;
    Pair d;
    double a = 1.0;
    double b = 1.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double ect = a - 0.7 * b - 0.2;
        a += -0.1 * ect + 0.01 * rng.normal();
        b += 0.05 * ect + 0.01 * rng.normal();
        d.a.push_back(a);
        d.b.push_back(b);
    }
    const VecmFit fit = fit_vecm(d.a, d.b, 1);
    EXPECT_NEAR(fit.long_run(0, 0), -0.1, 0.02);
    EXPECT_NEAR(fit.long_run(0, 1), 0.07, 0.02);
    EXPECT_NEAR(fit.long_run(1, 0), 0.05, 0.02);
    EXPECT_NEAR(fit.long_run(1, 1), -0.035, 0.02);
    EXPECT_EQ(fit.observations(), static_cast<Eigen::Index>(n - 1));
    EXPECT_TRUE(fit.gamma_matrices.empty());
    EXPECT_GT(fit.long_run_std_errors.minCoeff(), 0.0);
    const auto r = johansen_test(fit);
    ASSERT_TRUE(r.hedge_ratio);
    EXPECT_NEAR(*r.hedge_ratio, -0.7, 0.01);
}

TEST(VecmTest, ResidualsAreOrthogonalToRegressors) {
    const Pair d = cointegrated(2, 300, 0.1, 0.7);
    const VecmFit fit = fit_vecm(d.a, d.b, 3);
    EXPECT_EQ(fit.gamma_matrices.size(), 2u);
    EXPECT_EQ(fit.observations(), 297);
    EXPECT_LT((fit.short_run.transpose() * fit.residuals).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((fit.lagged_levels.transpose() * fit.residuals).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(VecmTest, RejectsBadInput) {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{1, 2, 3, 4};
    EXPECT_THROW(fit_vecm(a, b, 1), DomainError);
    EXPECT_THROW(fit_vecm(a, a, 0), DomainError);
    EXPECT_THROW(fit_vecm(a, a, 3), DomainError);
    const std::vector<double> c(50, 1.0);
    const std::vector<double> lin = [] {
        std::vector<double> v;
        for (int i = 0; i < 50; ++i) v.push_back(0.1 * i);
        return v;
    }();
    EXPECT_THROW(fit_vecm(c, lin, 1), DegenerateInputError);
}

TEST(SelectLagTest, WhiteNoiseDifferencesPickOne) {
    int ones = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Pair d = random_walks(seed, 1500);
        if (select_lag(d.a, d.b, 10) == 1) ++ones;
    }
    EXPECT_GE(ones, 9);
}

TEST(SelectLagTest, AutocorrelatedDifferencesPickThree) {
    // Differences follow a VAR(2), so the VECM needs p = 3.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        Pair d;
        double a = 0.0, b = 0.0, da1 = 0.0, db1 = 0.0, da2 = 0.0, db2 = 0.0;
        for (int t = 0; t < 3000; ++t) {
            const double da = 0.5 * da1 - 0.4 * da2 + rng.normal();
            const double db = 0.3 * db1 + 0.4 * db2 + 0.2 * da1 + rng.normal();
            da2 = da1, db2 = db1, da1 = da, db1 = db;
            a += da;
            b += db;
            d.a.push_back(a);
            d.b.push_back(b);
        }
        EXPECT_EQ(select_lag(d.a, d.b, 10), 3) << seed;
    }
}

TEST(SelectLagTest, MaxLagOneAndErrors) {
    const Pair d = random_walks(1, 100);
    EXPECT_EQ(select_lag(d.a, d.b, 1), 1);
    EXPECT_THROW(select_lag(d.a, d.b, 0), DomainError);
    const std::vector<double> tiny{1, 2, 3};
    EXPECT_THROW(select_lag(tiny, tiny, 5), DomainError);
}

std::vector<PriceSeries> universe() {
    std::vector<PriceSeries> u;
    const auto pair = [] {
        SimSpec spec;
        spec.ou = OUParams{0.1, 0.5, 0.02, 0.0};
        spec.length = 600;
        spec.seed = 5;
        spec.beta = 0.7;
        spec.walk_volatility = 0.015;
        spec.initial_level = 4.6;
        return simulate_cointegrated_pair(spec, "Gold", "Silver");
    }();
    u.push_back(pair.series_a);
    u.push_back(pair.series_b);
    u.push_back(simulate_random_walk("Corn", 600, 0.015, 77, 4.0));
    u.push_back(simulate_random_walk("Lead", 600, 0.015, 78, 4.0));
    return u;
}

TEST(ScanTest, TestsEveryUnorderedPairOnce) {
    const auto u = universe();
    const ScanReport report = scan_pairs(u);
    ASSERT_EQ(report.pairs_tested(), 6u);
    EXPECT_EQ(report.entries[0].pair_id(), "Gold__Silver");
    EXPECT_EQ(report.entries[5].pair_id(), "Corn__Lead");
    EXPECT_TRUE(report.entries[0].cointegrated());
    for (const auto& e : report.entries) {
        EXPECT_FALSE(e.failed()) << e.error;
        EXPECT_GE(e.lag, 1);
        EXPECT_LE(e.lag, 10);
    }
}

TEST(ScanTest, UsesTrainingSegmentOnly) {
    auto u = universe();
    const ScanReport before = scan_pairs(u);
    // Corrupt the last 20% of every series; the scan result must not move.
    for (auto& s : u) {
        for (std::size_t t = 480; t < s.size(); ++t) s.log_prices[t] += static_cast<double>(t % 7);
    }
    const ScanReport after = scan_pairs(u);
    for (std::size_t k = 0; k < before.entries.size(); ++k) {
        EXPECT_EQ(before.entries[k].result->trace_statistics, after.entries[k].result->trace_statistics);
    }
}

TEST(ScanTest, ParallelMatchesSerial) {
    const auto u = universe();
    ScanOptions serial;
    ScanOptions parallel;
    parallel.workers = 4;
    const auto a = scan_pairs(u, serial);
    const auto b = scan_pairs(u, parallel);
    for (std::size_t k = 0; k < a.entries.size(); ++k) {
        EXPECT_EQ(a.entries[k].lag, b.entries[k].lag);
        EXPECT_EQ(a.entries[k].result->trace_statistics, b.entries[k].result->trace_statistics);
    }
}

TEST(ScanTest, RecordsPerPairFailures) {
    auto u = universe();
    u.push_back(PriceSeries{"Flat", u[0].dates, std::vector<double>(600, 1.0)});
    const ScanReport report = scan_pairs(u);
    EXPECT_EQ(report.pairs_tested(), 10u);
    EXPECT_EQ(report.failures().size(), 4u);
    for (const auto& f : report.failures()) EXPECT_EQ(f.id_b, "Flat");
}

TEST(ScanTest, SmallUniverses) {
    const auto u = universe();
    EXPECT_EQ(scan_pairs(std::span<const PriceSeries>(u.data(), 1)).pairs_tested(), 0u);
    EXPECT_EQ(scan_pairs(std::span<const PriceSeries>()).pairs_tested(), 0u);
}

TEST(ScanTest, SplitIndexOverride) {
    ScanOptions o;
    EXPECT_EQ(resolve_split_index(2347, o), 1877u);
    o.split_index = 1878;
    EXPECT_EQ(resolve_split_index(2347, o), 1878u);
    o.split_index.reset();
    o.train_fraction = 1.5;
    EXPECT_THROW(resolve_split_index(10, o), DomainError);
}

}  // namespace
