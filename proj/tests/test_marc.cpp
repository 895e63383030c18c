#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "marcq/chain_builder.hpp"
#include "marcq/marc.hpp"
#include "support.hpp"

using namespace marcq;
using marcq::testing::running_example;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

LabeledCTMC random_chain(std::mt19937_64& gen, std::size_t n) {
    std::uniform_real_distribution<double> rate(0.05, 2.0);
    std::bernoulli_distribution edge(0.25), completes(0.4);
    std::vector<Transition> ts;
    for (std::size_t y = 0; y < n; ++y) {
        ts.push_back({y, (y + 1) % n, completes(gen) ? 1 : 0, rate(gen)});
        for (std::size_t z = 0; z < n; ++z) {
            if (edge(gen)) {
                ts.push_back({y, z, completes(gen) ? 1 : 0, rate(gen)});
            }
        }
    }
    ts.push_back({0, 0, 1, 1.0});
    return LabeledCTMC::from_transitions(n, std::move(ts));
}

void expect_consistent(const LabeledCTMC& chain, const MarcSolution& s) {
    EXPECT_NEAR(sum(s.stationary), 1.0, 1e-10);
    EXPECT_NEAR(sum(s.departure), 1.0, 1e-10);
    for (std::size_t y = 0; y < chain.size(); ++y) {
        EXPECT_GE(s.stationary[y], 0.0);
        EXPECT_GE(s.departure[y], 0.0);
    }
    EXPECT_GT(s.lambda_star, 0.0);
    EXPECT_NEAR(dot(s.stationary, s.delta), 0.0, 1e-9);
    EXPECT_NEAR(dot(s.departure, s.delta), s.delta_yd, 1e-12);
    EXPECT_LT(balance_residual(chain, s.stationary), 1e-9);
    EXPECT_LT(recurrence_residual(chain, s.lambda_star, s.delta), 1e-9);
    EXPECT_LT(generator_residual(chain, s), 1e-9);
}

} // namespace

// Exact rationals: Y = (1/5, 1/5, 3/5), lambda* = 9/10, Y_d = (4/9, 2/9, 1/3),
// Delta = (69/50, -27/100, -37/100), Delta(Y_d) = 43/100.
TEST(Analyzer, RunningExampleIsExact) {
    const auto chain = build_sss_chain(running_example());
    const auto s = analyze(chain);
    ASSERT_EQ(chain.size(), 3u);
    EXPECT_NEAR(s.lambda_star, 9.0 / 10.0, 1e-12);
    const std::vector<double> y = {1.0 / 5.0, 1.0 / 5.0, 3.0 / 5.0};
    const std::vector<double> yd = {4.0 / 9.0, 2.0 / 9.0, 1.0 / 3.0};
    const std::vector<double> delta = {69.0 / 50.0, -27.0 / 100.0, -37.0 / 100.0};
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(s.stationary[i], y[i], 1e-12);
        EXPECT_NEAR(s.departure[i], yd[i], 1e-12);
        EXPECT_NEAR(s.delta[i], delta[i], 1e-12);
    }
    EXPECT_NEAR(s.delta_yd, 43.0 / 100.0, 1e-12);
    EXPECT_LT(generator_residual(chain, s), 1e-10);
    expect_consistent(chain, s);
}

TEST(Analyzer, SaturatedChainAgreesOnRunningExample) {
    const auto sat = analyze(build_saturated_chain(running_example()));
    EXPECT_NEAR(sat.lambda_star, 0.9, 1e-12);
    EXPECT_NEAR(sat.delta_yd, 0.43, 1e-12);
}

// Independent symbolic solve at p1 = 1/2, mu1 = mu2 = 1: Y = (1/7, 2/7, 4/7),
// lambda* = 8/7, Y_d = (1/4, 1/4, 1/2), Delta = (32/49, -10/49, -3/49), Delta(Y_d) = 4/49.
TEST(Analyzer, SymmetricTwoServerCase) {
    const WorkloadSpec spec(2, {exponential_class(1, 0.5, 1.0), exponential_class(2, 0.5, 1.0)});
    const auto chain = build_sss_chain(spec);
    const auto s = analyze(chain);
    const std::vector<double> y = {1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0};
    const std::vector<double> yd = {0.25, 0.25, 0.5};
    const std::vector<double> delta = {32.0 / 49.0, -10.0 / 49.0, -3.0 / 49.0};
    EXPECT_NEAR(s.lambda_star, 8.0 / 7.0, 1e-12);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(s.stationary[i], y[i], 1e-12);
        EXPECT_NEAR(s.departure[i], yd[i], 1e-12);
        EXPECT_NEAR(s.delta[i], delta[i], 1e-12);
    }
    EXPECT_NEAR(s.delta_yd, 4.0 / 49.0, 1e-12);
}

TEST(Analyzer, OneStateChain) {
    const auto chain = LabeledCTMC::from_transitions(1, {{0, 0, 1, 2.5}});
    const auto s = analyze(chain);
    EXPECT_EQ(s.stationary, std::vector<double>{1.0});
    EXPECT_EQ(s.departure, std::vector<double>{1.0});
    EXPECT_EQ(s.delta, std::vector<double>{0.0});
    EXPECT_EQ(s.lambda_star, 2.5);
    EXPECT_EQ(s.delta_yd, 0.0);
    EXPECT_EQ(generator_residual(chain, s), 0.0);
}

TEST(Analyzer, SingleClassNeedKThroughputIsRate) {
    const auto s = analyze(build_sss_chain(marcq::testing::mm1_spec(4, 0.7)));
    EXPECT_DOUBLE_EQ(s.lambda_star, 0.7);
    EXPECT_EQ(s.delta_yd, 0.0);
}

TEST(Analyzer, DepartureDistributionIsProductFormForTwoServers) {
    const double p1 = 0.3;
    const WorkloadSpec spec(2, {exponential_class(1, p1, 1.7), exponential_class(2, 1.0 - p1, 0.4)});
    const auto s = analyze(build_sss_chain(spec));
    EXPECT_NEAR(s.departure[0], p1 * p1, 1e-12);
    EXPECT_NEAR(s.departure[1], p1 * (1.0 - p1), 1e-12);
    EXPECT_NEAR(s.departure[2], 1.0 - p1, 1e-12);
}

TEST(Analyzer, MatchedStabilitySettings) {
    const auto k4 = analyze(build_sss_chain(load_spec(marcq::testing::data_path("matched_k4.json"))));
    const auto k10 = analyze(build_sss_chain(load_spec(marcq::testing::data_path("matched_k10.json"))));
    EXPECT_NEAR(k4.lambda_star, 0.5413, 5e-4);
    EXPECT_NEAR(k4.delta_yd, 0.3271, 1e-3);
    EXPECT_NEAR(k10.lambda_star, 0.5411, 5e-4);
    EXPECT_NEAR(k10.delta_yd, 1.850, 2e-3);
}

TEST(Analyzer, RandomChainsSatisfyDriftIdentity) {
    std::mt19937_64 gen(2024);
    for (int trial = 0; trial < 25; ++trial) {
        const auto chain = random_chain(gen, 20);
        ASSERT_TRUE(is_irreducible(chain));
        const auto s = analyze(chain);
        expect_consistent(chain, s);
    }
}

TEST(Analyzer, SparsePathMatchesDensePath) {
    std::mt19937_64 gen(5);
    const auto chain = random_chain(gen, 60);
    const auto dense = analyze(chain);
    SolverOptions opt;
    opt.dense_limit = 10;
    const auto sparse = analyze(chain, opt);
    EXPECT_NEAR(sparse.lambda_star, dense.lambda_star, 1e-10);
    EXPECT_NEAR(sparse.delta_yd, dense.delta_yd, 1e-8);
    for (std::size_t y = 0; y < chain.size(); ++y) {
        EXPECT_NEAR(sparse.stationary[y], dense.stationary[y], 1e-10);
        EXPECT_NEAR(sparse.delta[y], dense.delta[y], 1e-8);
    }
}

TEST(Analyzer, RescalingTimeScalesThroughputOnly) {
    const auto chain = build_sss_chain(running_example());
    const auto base = analyze(chain);
    const auto fast = analyze(chain.scaled(2.0));
    EXPECT_NEAR(fast.lambda_star, 2.0 * base.lambda_star, 1e-12);
    for (std::size_t y = 0; y < chain.size(); ++y) {
        EXPECT_NEAR(fast.delta[y], base.delta[y], 1e-12);
        EXPECT_NEAR(fast.stationary[y], base.stationary[y], 1e-12);
    }
}

TEST(Analyzer, ReducibleAndIllConditionedChainsAreRejected) {
    const auto reducible = LabeledCTMC::from_transitions(2, {{0, 0, 1, 1.0}, {1, 1, 1, 1.0}});
    EXPECT_THROW(stationary(reducible), NumericError);
    SolverOptions strict;
    strict.max_condition = 1.5;
    EXPECT_THROW(analyze(build_sss_chain(running_example()), strict), NumericError);
}

TEST(MonteCarloDelta, AgreesWithLinearSystemOnRunningExample) {
    const auto chain = build_sss_chain(running_example());
    const auto s = analyze(chain);
    for (std::size_t y = 0; y < chain.size(); ++y) {
        const auto est = estimate_delta_mc(chain, y, 200.0, 20'000, 99, s.lambda_star);
        EXPECT_TRUE(est.contains(s.delta[y])) << chain.label(y) << ": " << est.mean << " +- " << est.half_width;
    }
}

TEST(MonteCarloDelta, OneStateChainIsExactlyZeroOnAverage) {
    const auto chain = LabeledCTMC::from_transitions(1, {{0, 0, 1, 1.0}});
    const auto est = estimate_delta_mc(chain, 0, 50.0, 2000, 3);
    EXPECT_TRUE(est.contains(0.0)) << est.mean << " +- " << est.half_width;
}

TEST(MonteCarloDelta, DeterministicForSeed) {
    const auto chain = build_sss_chain(running_example());
    const auto a = estimate_delta_mc(chain, 2, 20.0, 500, 42);
    const auto b = estimate_delta_mc(chain, 2, 20.0, 500, 42);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.half_width, b.half_width);
}

TEST(Predict, RunningExampleDominantTerm) {
    const auto s = analyze(build_sss_chain(running_example()));
    for (double lambda : {0.1, 0.45, 0.8, 0.89}) {
        const auto p = predict(s, lambda);
        EXPECT_NEAR(p.mean_T, (10.0 / 9.0) * 1.43 / (1.0 - lambda / 0.9), 1e-10);
        EXPECT_NEAR(p.mean_Q, 1.43 / (1.0 - lambda / 0.9), 1e-10);
    }
    EXPECT_THROW(predict(s, 0.95), DomainError);
    EXPECT_THROW(predict(0.9, 0.43, 0.9), DomainError);
    EXPECT_THROW(predict(s, 0.0), DomainError);
    EXPECT_THROW(predict(s, -1.0), DomainError);
}

TEST(Predict, SingleClassReducesToMM1) {
    const double mu = 1.5;
    const auto s = analyze(build_sss_chain(marcq::testing::mm1_spec(3, mu)));
    for (double lambda : {0.3, 0.9, 1.4}) {
        EXPECT_DOUBLE_EQ(predict(s, lambda).mean_T, 1.0 / (mu - lambda));
    }
}

TEST(Predict, CurveEvaluatesByLoad) {
    const PredictionCurve curve(0.9, 0.43);
    EXPECT_NEAR(curve.at_load(0.5).mean_T, (10.0 / 9.0) * 1.43 / 0.5, 1e-12);
    const std::vector<double> lambdas = {0.1, 0.2};
    const auto pts = curve.evaluate(lambdas);
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[1].mean_T, curve.at(0.2).mean_T);
}
