#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "marcq/chain_builder.hpp"
#include "marcq/marc.hpp"
#include "marcq/sim.hpp"
#include "support.hpp"

using namespace marcq;
using marcq::testing::mm1_spec;
using marcq::testing::running_example;

namespace {

SimConfig config(double lambda, std::uint64_t arrivals = 200'000, std::size_t reps = 10, std::uint64_t seed = 17) {
    SimConfig cfg;
    cfg.lambda = lambda;
    cfg.n_arrivals = arrivals;
    cfg.replications = reps;
    cfg.seed = seed;
    return cfg;
}

double littles_gap(const SimResult& r, double lambda) {
    return std::abs(r.mean_N.mean - lambda * r.mean_T.mean) / r.mean_N.mean;
}

} // namespace

TEST(SimConfig, Validation) {
    EXPECT_THROW(config(0.0).validate(), ValidationError);
    EXPECT_THROW(config(-1.0).validate(), ValidationError);
    auto cfg = config(0.5);
    cfg.warmup_fraction = 0.95;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = config(0.5, 999);
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = config(0.5, 1000, 0);
    EXPECT_THROW(cfg.validate(), ValidationError);
    EXPECT_NO_THROW(config(0.5, 1000, 1).validate());
    EXPECT_THROW(simulate_msj(running_example(), config(0.0)), ValidationError);
}

TEST(SimulateMsj, MM1ReductionContainsAnalyticMean) {
    const double mu = 2.0;
    const auto r = simulate_msj(mm1_spec(3, mu), config(0.5 * mu));
    EXPECT_TRUE(r.mean_T.contains(2.0 / mu)) << r.mean_T.mean << " +- " << r.mean_T.half_width;
    // the front holds k = 3 jobs, so the back is empty iff N <= 3
    EXPECT_TRUE(r.p_queue_empty.contains(1.0 - std::pow(0.5, 4))) << r.p_queue_empty.mean;
    EXPECT_LT(littles_gap(r, mu * 0.5), 0.01);
}

TEST(SimulateMsj, DeterministicForSeed) {
    const auto cfg = config(0.7, 20'000, 4);
    const auto a = simulate_msj(running_example(), cfg);
    const auto b = simulate_msj(running_example(), cfg);
    ASSERT_EQ(a.replications.size(), b.replications.size());
    for (std::size_t i = 0; i < a.replications.size(); ++i) {
        EXPECT_EQ(a.replications[i].mean_T, b.replications[i].mean_T);
        EXPECT_EQ(a.replications[i].mean_N, b.replications[i].mean_N);
        EXPECT_EQ(a.replications[i].p_queue_empty, b.replications[i].p_queue_empty);
        EXPECT_EQ(a.replications[i].busy_periods, b.replications[i].busy_periods);
    }
    EXPECT_EQ(a.mean_T.mean, b.mean_T.mean);
    EXPECT_EQ(a.mean_T.half_width, b.mean_T.half_width);
    const auto c = simulate_msj(running_example(), config(0.7, 20'000, 4, 18));
    EXPECT_NE(a.mean_T.mean, c.mean_T.mean);
}

TEST(SimulateMsj, InvariantsHoldAtEveryEvent) {
    for (const char* name : {"running_example.json", "uniform_k3.json", "erlang_k3.json", "matched_k4.json"}) {
        const auto spec = load_spec(marcq::testing::data_path(name));
        const double lambda_star = analyze(build_sss_chain(spec)).lambda_star;
        auto cfg = config(0.9 * lambda_star, 20'000, 2);
        cfg.check_invariants = true;
        EXPECT_NO_THROW(simulate_msj(spec, cfg)) << name;
        EXPECT_NO_THROW(simulate_atleastk(spec, cfg)) << name;
        EXPECT_NO_THROW(simulate_coupled(spec, cfg)) << name;
    }
}

TEST(SimulateMsj, ResponseTimeApproachesPrediction) {
    const auto spec = running_example();
    const auto sol = analyze(build_sss_chain(spec));
    auto rel_error = [&](double load) {
        const auto r = simulate_msj(spec, config(load * sol.lambda_star, 200'000, 5));
        EXPECT_LT(littles_gap(r, load * sol.lambda_star), 0.01) << load;
        const double pred = predict(sol, load * sol.lambda_star).mean_T;
        return std::abs(r.mean_T.mean - pred) / r.mean_T.mean;
    };
    EXPECT_LT(rel_error(0.9), rel_error(0.5));
}

TEST(SimulateMsj, RunawayIsReported) {
    auto cfg = config(1.5, 200'000, 1);
    cfg.runaway_bound = 1000;
    EXPECT_THROW(simulate_msj(running_example(), cfg), InstabilityError);
}

TEST(SimulateMmsr, OneStateChainIsMM1) {
    const double mu = 1.0, lambda = 0.6;
    const auto chain = LabeledCTMC::from_transitions(1, {{0, 0, 1, mu}});
    const auto r = simulate_mmsr(chain, config(lambda));
    EXPECT_TRUE(r.mean_T.contains(1.0 / (mu - lambda))) << r.mean_T.mean << " +- " << r.mean_T.half_width;
    EXPECT_LT(littles_gap(r, lambda), 0.01);
}

TEST(SimulateMmsr, RunningExampleQueueNearDominantTerm) {
    const auto chain = build_sss_chain(running_example());
    const auto sol = analyze(chain);
    const auto r = simulate_mmsr(chain, config(0.8 * sol.lambda_star));
    const double dominant = predict(sol, 0.8 * sol.lambda_star).mean_Q;
    EXPECT_NEAR(dominant, 1.43 / 0.2, 1e-9);
    EXPECT_LT(std::abs(r.mean_Q.mean - dominant), 2.0) << r.mean_Q.mean;
}

TEST(SimulateMmsr, BusyPeriodGrowsLikeInverseSlack) {
    const auto chain = build_sss_chain(running_example());
    const double lambda_star = 0.9;
    std::vector<double> scaled;
    for (double load : {0.8, 0.9, 0.95}) {
        const auto r = simulate_mmsr(chain, config(load * lambda_star, 400'000));
        scaled.push_back(r.mean_busy_period.mean * (1.0 - load));
    }
    const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
    EXPECT_LT(*hi / *lo, 2.0) << scaled[0] << " " << scaled[1] << " " << scaled[2];
}

TEST(SimulateAtLeastK, BackMatchesMmsrOnSaturatedChain) {
    const auto spec = running_example();
    const auto sat = build_saturated_chain(spec);
    const auto cfg = config(0.8 * 0.9, 200'000);
    const auto ak = simulate_atleastk(spec, cfg);
    const auto mmsr = simulate_mmsr(sat, cfg);
    const double gap = std::abs(ak.mean_Q.mean - mmsr.mean_Q.mean);
    EXPECT_LT(gap, std::hypot(ak.mean_Q.half_width, mmsr.mean_Q.half_width))
        << ak.mean_Q.mean << " vs " << mmsr.mean_Q.mean;
}

TEST(SimulateAtLeastK, AboutKMoreJobsThanMsj) {
    const auto spec = running_example();
    for (double load : {0.5, 0.8, 0.9}) {
        const auto cfg = config(load * 0.9, 200'000, 5);
        const auto ak = simulate_atleastk(spec, cfg);
        const auto msj = simulate_msj(spec, cfg);
        const double diff = ak.mean_N.mean - msj.mean_N.mean;
        EXPECT_GT(diff, 0.0) << load;
        EXPECT_LT(diff, spec.k() + 1.0) << load;
        EXPECT_LT(std::abs(ak.mean_N.mean - ak.arrival_rate.mean * ak.mean_T.mean) / ak.mean_N.mean, 0.01) << load;
    }
}

TEST(SimulateAtLeastK, SingleClassBackIsMM1) {
    const double mu = 1.0, lambda = 0.7;
    const auto r = simulate_atleastk(mm1_spec(2, mu), config(lambda, 200'000, 40));
    EXPECT_TRUE(r.p_queue_empty.contains(1.0 - lambda / mu))
        << r.p_queue_empty.mean << " +- " << r.p_queue_empty.half_width;
}

TEST(CoupledSimulator, MergedFrontsStayEqualUntilABackEmpties) {
    const auto spec = running_example();
    auto cfg = config(0.5, 1000, 1);
    CoupledSimulator sim(spec, cfg, 0);
    const std::vector<JobState> front = {{0, 0}, {1, 0}};
    sim.set_state(front, 40, front, 25);
    ASSERT_TRUE(sim.merged());
    int steps = 0;
    while (!sim.msj().back().empty() && !sim.ak().back().empty()) {
        ASSERT_TRUE(sim.step());
        ++steps;
        ASSERT_FALSE(sim.mismatched()) << "after step " << steps;
    }
    EXPECT_GT(steps, 20);
}

TEST(CoupledSimulator, UnequalFrontsEvolveIndependently) {
    const auto spec = running_example();
    CoupledSimulator sim(spec, config(0.5, 1000, 1), 0);
    const std::vector<JobState> a = {{0, 0}, {0, 0}};
    const std::vector<JobState> b = {{1, 0}, {0, 0}};
    sim.set_state(a, 5, b, 5);
    EXPECT_TRUE(sim.mismatched());
    EXPECT_FALSE(sim.merged());
    EXPECT_TRUE(sim.step());
}

TEST(CoupledSimulator, MismatchShrinksWithLoad) {
    const auto spec = running_example();
    const auto low = simulate_coupled(spec, config(0.8 * 0.9, 200'000, 5));
    const auto high = simulate_coupled(spec, config(0.99 * 0.9, 200'000, 5));
    ASSERT_TRUE(low.mismatch_fraction && high.mismatch_fraction);
    EXPECT_LT(high.mismatch_fraction->mean, low.mismatch_fraction->mean);
    EXPECT_LT(high.p_queue_empty.mean, low.p_queue_empty.mean);
    EXPECT_FALSE(simulate_msj(spec, config(0.5, 1000, 2)).mismatch_fraction.has_value());
}

TEST(SaturatedThroughput, CompletionRateMatchesLambdaStar) {
    const auto chain = build_saturated_chain(running_example());
    const double horizon = 2e6;
    Rng rng = make_stream(3, 0, Stream::chain_service);
    const double rate = static_cast<double>(completion_count(chain, 0, horizon, rng)) / horizon;
    EXPECT_LT(std::abs(rate - 0.9) / 0.9, 0.005) << rate;
}
