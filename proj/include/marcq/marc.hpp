#pragma once

// Stationary analysis of a completion-labeled service process: time-average
// distribution Y, throughput (= stability threshold lambda*), departure-average
// distribution Y_d, relative completions Delta(y), and the dominant term of the
// mean response time of the queue it modulates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "marcq/errors.hpp"
#include "marcq/labeled_ctmc.hpp"
#include "marcq/parallel.hpp"
#include "marcq/rng.hpp"
#include "marcq/stats.hpp"

namespace marcq {

struct SolverOptions {
    /// Chains above this size use iterative / sparse solvers.
    std::size_t dense_limit = 2000;
    double max_condition = 1e12;
    double power_tolerance = 1e-12;
    double uniformization_factor = 1.1;
    std::size_t power_max_iterations = 2'000'000;
};

struct MarcSolution {
    std::vector<double> stationary;
    double lambda_star = 0.0;
    std::vector<double> departure;
    std::vector<double> delta;
    /// Delta(Y_d, Y) = sum_y Y_d(y) Delta(y)
    double delta_yd = 0.0;
};

/// max_y | pi(y) mu_{y,.,.} - sum_y' pi(y') mu_{y',y,.} |
inline double balance_residual(const LabeledCTMC& chain, std::span<const double> pi) {
    std::vector<double> inflow(chain.size(), 0.0);
    for (const auto& t : chain.transitions()) {
        inflow[t.to] += pi[t.from] * t.rate;
    }
    double worst = 0.0;
    for (std::size_t y = 0; y < chain.size(); ++y) {
        worst = std::max(worst, std::abs(pi[y] * chain.out_rate(y) - inflow[y]));
    }
    return worst;
}

/// max_y | Delta(y) - (mu_{y,.,1} - lambda*)/mu_{y,.,.} - sum_y' mu_{y,y',.}/mu_{y,.,.} Delta(y') |
inline double recurrence_residual(const LabeledCTMC& chain, double lambda_star, std::span<const double> delta) {
    double worst = 0.0;
    for (std::size_t y = 0; y < chain.size(); ++y) {
        double rhs = chain.completion_rate(y) - lambda_star;
        for (const auto& t : chain.outgoing(y)) {
            rhs += t.rate * delta[t.to];
        }
        worst = std::max(worst, std::abs(delta[y] - rhs / chain.out_rate(y)));
    }
    return worst;
}

namespace detail {

inline Eigen::MatrixXd dense_generator(const LabeledCTMC& chain) {
    const auto n = static_cast<Eigen::Index>(chain.size());
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
    for (const auto& t : chain.transitions()) {
        const auto from = static_cast<Eigen::Index>(t.from);
        q(from, static_cast<Eigen::Index>(t.to)) += t.rate;
        q(from, from) -= t.rate;
    }
    return q;
}

inline void check_condition(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu, double max_condition,
                            const char* what) {
    const double rcond = lu.rcond();
    if (!(rcond > 0.0) || 1.0 / rcond > max_condition) {
        throw NumericError(std::string(what) + ": system is singular or ill-conditioned (condition estimate " +
                           std::to_string(rcond > 0.0 ? 1.0 / rcond : INFINITY) + ")");
    }
}

inline std::vector<double> stationary_power(const LabeledCTMC& chain, const SolverOptions& opt) {
    const std::size_t n = chain.size();
    const double uniform_rate = opt.uniformization_factor * chain.max_out_rate();
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n);
    for (std::size_t iter = 0; iter < opt.power_max_iterations; ++iter) {
        for (std::size_t y = 0; y < n; ++y) {
            next[y] = pi[y] * (1.0 - chain.out_rate(y) / uniform_rate);
        }
        for (const auto& t : chain.transitions()) {
            next[t.to] += pi[t.from] * t.rate / uniform_rate;
        }
        double total = 0.0;
        for (double v : next) {
            total += v;
        }
        double change = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            next[y] /= total;
            change += std::abs(next[y] - pi[y]);
        }
        pi.swap(next);
        if (change < opt.power_tolerance) {
            return pi;
        }
    }
    throw NumericError("stationary: power iteration did not converge");
}

} // namespace detail

/// Unique stationary distribution of an irreducible chain.
inline std::vector<double> stationary(const LabeledCTMC& chain, const SolverOptions& opt = {}) {
    const std::size_t n = chain.size();
    if (!is_irreducible(chain)) {
        throw NumericError("stationary: chain is reducible");
    }
    if (n == 1) {
        return {1.0};
    }
    std::vector<double> pi;
    if (n <= opt.dense_limit) {
        // Balance equations Q^T pi = 0 with the last one replaced by sum(pi) = 1.
        Eigen::MatrixXd a = detail::dense_generator(chain).transpose();
        a.row(a.rows() - 1).setOnes();
        Eigen::VectorXd b = Eigen::VectorXd::Zero(a.rows());
        b[b.size() - 1] = 1.0;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
        detail::check_condition(lu, opt.max_condition, "stationary");
        const Eigen::VectorXd x = lu.solve(b);
        pi.assign(x.data(), x.data() + x.size());
    } else {
        pi = detail::stationary_power(chain, opt);
    }
    double total = 0.0;
    for (double& v : pi) {
        if (v < 0.0) {
            if (v < -1e-12) {
                throw NumericError("stationary: solution has negative entries");
            }
            v = 0.0;
        }
        total += v;
    }
    for (double& v : pi) {
        v /= total;
    }
    const double residual = balance_residual(chain, pi);
    if (residual > 1e-10 * std::max(1.0, chain.max_out_rate())) {
        throw NumericError("stationary: balance residual " + std::to_string(residual) + " too large");
    }
    return pi;
}

/// lambda* = sum_y pi(y) mu_{y,.,1}
inline double throughput(const LabeledCTMC& chain, std::span<const double> pi) {
    double x = 0.0;
    for (std::size_t y = 0; y < chain.size(); ++y) {
        x += pi[y] * chain.completion_rate(y);
    }
    return x;
}

/// P(Y_d = y') = (1/lambda*) sum_y pi(y) mu_{y,y',1}
inline std::vector<double> departure_dist(const LabeledCTMC& chain, std::span<const double> pi, double lambda_star) {
    std::vector<double> yd(chain.size(), 0.0);
    for (const auto& t : chain.transitions()) {
        if (t.completions == 1) {
            yd[t.to] += pi[t.from] * t.rate / lambda_star;
        }
    }
    return yd;
}

/// Relative completions Delta(y) = lim E[C(y,t)] - lambda* t, from
///   mu_{y,.,.} Delta(y) - sum_y' mu_{y,y',.} Delta(y') = mu_{y,.,1} - lambda*
/// with one state anchored at 0, then shifted so that sum_y pi(y) Delta(y) = 0.
/// The anchor is the most likely state: its equation is the one left out, and
/// leaving out a rarely visited state amplifies rounding in lambda* by 1/pi.
inline std::vector<double> relative_completions(const LabeledCTMC& chain, std::span<const double> pi,
                                                double lambda_star, const SolverOptions& opt = {}) {
    const std::size_t n = chain.size();
    if (n == 1) {
        return {0.0};
    }
    const auto anchor = static_cast<std::size_t>(std::max_element(pi.begin(), pi.end()) - pi.begin());
    // position of state y in the reduced system
    auto slot = [&](std::size_t y) { return static_cast<Eigen::Index>(y < anchor ? y : y - 1); };
    const auto m = static_cast<Eigen::Index>(n - 1);
    Eigen::VectorXd rhs(m);
    std::vector<Eigen::Triplet<double>> entries;
    for (std::size_t y = 0; y < n; ++y) {
        if (y == anchor) {
            continue;
        }
        rhs[slot(y)] = chain.completion_rate(y) - lambda_star;
        for (const auto& t : chain.outgoing(y)) {
            entries.emplace_back(slot(y), slot(y), t.rate);
            if (t.to != anchor) {
                entries.emplace_back(slot(y), slot(t.to), -t.rate);
            }
        }
    }
    Eigen::SparseMatrix<double> a(m, m);
    a.setFromTriplets(entries.begin(), entries.end());
    Eigen::VectorXd x;
    if (n <= opt.dense_limit) {
        Eigen::PartialPivLU<Eigen::MatrixXd> lu{Eigen::MatrixXd(a)};
        detail::check_condition(lu, opt.max_condition, "relative completions");
        x = lu.solve(rhs);
    } else {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(a);
        if (lu.info() != Eigen::Success) {
            throw NumericError("relative completions: sparse factorization failed");
        }
        x = lu.solve(rhs);
        if (lu.info() != Eigen::Success) {
            throw NumericError("relative completions: sparse solve failed");
        }
    }
    std::vector<double> delta(n, 0.0);
    for (std::size_t y = 0; y < n; ++y) {
        if (y != anchor) {
            delta[y] = x[slot(y)];
        }
    }
    double offset = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
        offset += pi[y] * delta[y];
    }
    double scale = 1.0;
    for (double& d : delta) {
        d -= offset;
        scale = std::max(scale, std::abs(d));
    }
    const double residual = recurrence_residual(chain, lambda_star, delta);
    if (!(residual <= 1e-9 * scale)) {
        throw NumericError("relative completions: recurrence residual " + std::to_string(residual) + " too large");
    }
    return delta;
}

inline MarcSolution analyze(const LabeledCTMC& chain, const SolverOptions& opt = {}) {
    MarcSolution s;
    s.stationary = stationary(chain, opt);
    s.lambda_star = throughput(chain, s.stationary);
    if (!(s.lambda_star > 0.0)) {
        throw NumericError("analyze: service process never completes jobs");
    }
    s.departure = departure_dist(chain, s.stationary, s.lambda_star);
    s.delta = relative_completions(chain, s.stationary, s.lambda_star, opt);
    for (std::size_t y = 0; y < chain.size(); ++y) {
        s.delta_yd += s.departure[y] * s.delta[y];
    }
    return s;
}

/// Drift identity check: max_y | sum_{y',a} mu_{y,y',a} (Delta(y') - Delta(y)) - (lambda* - mu_{y,.,1}) |.
inline double generator_residual(const LabeledCTMC& chain, const MarcSolution& sol) {
    double worst = 0.0;
    for (std::size_t y = 0; y < chain.size(); ++y) {
        double drift = 0.0;
        for (const auto& t : chain.outgoing(y)) {
            drift += t.rate * (sol.delta[t.to] - sol.delta[y]);
        }
        worst = std::max(worst, std::abs(drift - (sol.lambda_star - chain.completion_rate(y))));
    }
    return worst;
}

/// Number of a=1 transitions of one sample path started in `start` over [0, horizon].
inline std::uint64_t completion_count(const LabeledCTMC& chain, std::size_t start, double horizon, Rng& rng) {
    std::size_t y = start;
    double t = 0.0;
    std::uint64_t completions = 0;
    while (true) {
        t += sample_exponential(rng, chain.out_rate(y));
        if (t > horizon) {
            return completions;
        }
        double u = sample_uniform(rng) * chain.out_rate(y);
        const auto out = chain.outgoing(y);
        std::size_t pick = out.size() - 1;
        for (std::size_t i = 0; i < out.size(); ++i) {
            u -= out[i].rate;
            if (u < 0.0) {
                pick = i;
                break;
            }
        }
        completions += static_cast<std::uint64_t>(out[pick].completions);
        y = out[pick].to;
    }
}

/// Monte-Carlo estimate of E[C(y, horizon)] - lambda* horizon, independent of the
/// linear-system route. When `lambda_star` is not given it is taken from the
/// balance equations.
inline Estimate estimate_delta_mc(const LabeledCTMC& chain, std::size_t state, double horizon, std::size_t reps,
                                  std::uint64_t seed, std::optional<double> lambda_star = std::nullopt,
                                  double confidence = 0.99) {
    if (state >= chain.size()) {
        throw ValidationError("estimate_delta_mc: state index out of range");
    }
    if (!(horizon > 0.0) || reps < 2) {
        throw ValidationError("estimate_delta_mc: horizon must be positive and reps >= 2");
    }
    const double rate = lambda_star ? *lambda_star : throughput(chain, stationary(chain));
    std::vector<double> samples(reps);
    parallel_for(reps, [&](std::size_t r) {
        Rng rng = make_stream(seed, r, Stream::delta_mc);
        samples[r] = static_cast<double>(completion_count(chain, state, horizon, rng)) - rate * horizon;
    });
    return mean_interval(samples, confidence);
}

/// Dominant terms of the mean response time and mean number in queue.
struct Prediction {
    double mean_T = 0.0;
    double mean_Q = 0.0;
};

inline Prediction predict(double lambda_star, double delta_yd, double lambda) {
    if (!(lambda > 0.0 && lambda < lambda_star)) {
        throw DomainError("predict: arrival rate must lie in (0, lambda*) = (0, " + std::to_string(lambda_star) + ")");
    }
    const double load = lambda / lambda_star;
    const double mean_q = (1.0 + delta_yd) / (1.0 - load);
    return {mean_q / lambda_star, mean_q};
}

/// E[T] = (1/lambda*) (1 + Delta(Y_d)) / (1 - lambda/lambda*)
inline Prediction predict(const MarcSolution& sol, double lambda) {
    return predict(sol.lambda_star, sol.delta_yd, lambda);
}

class PredictionCurve {
public:
    PredictionCurve(double lambda_star, double delta_yd) : lambda_star_(lambda_star), delta_yd_(delta_yd) {}
    explicit PredictionCurve(const MarcSolution& sol) : PredictionCurve(sol.lambda_star, sol.delta_yd) {}

    double lambda_star() const noexcept { return lambda_star_; }
    double delta_yd() const noexcept { return delta_yd_; }

    Prediction at(double lambda) const { return predict(lambda_star_, delta_yd_, lambda); }
    Prediction at_load(double load) const { return at(load * lambda_star_); }

    std::vector<Prediction> evaluate(std::span<const double> lambdas) const {
        std::vector<Prediction> out;
        out.reserve(lambdas.size());
        for (double l : lambdas) {
            out.push_back(at(l));
        }
        return out;
    }

private:
    double lambda_star_;
    double delta_yd_;
};

} // namespace marcq
