#pragma once

// Experiment drivers behind the command-line tool: analysis reports, simulation
// grids, prediction-vs-simulation comparisons, parameter sweeps, and the run
// manifest. Everything writes plain CSV / JSON.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "marcq/chain_builder.hpp"
#include "marcq/closed_form_k2.hpp"
#include "marcq/errors.hpp"
#include "marcq/marc.hpp"
#include "marcq/parallel.hpp"
#include "marcq/sim.hpp"
#include "marcq/workload.hpp"
#include "marcq/workload_io.hpp"

namespace marcq {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Mode { analyze, simulate, validate, sweep };

inline std::string_view to_string(Mode m) {
    switch (m) {
    case Mode::analyze: return "analyze";
    case Mode::simulate: return "simulate";
    case Mode::validate: return "validate";
    case Mode::sweep: return "sweep";
    }
    return "?";
}

inline const std::vector<double>& default_load_grid() {
    static const std::vector<double> grid = {0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
    return grid;
}

struct ExperimentPlan {
    std::string spec_path;
    Mode mode = Mode::analyze;
    std::vector<double> load_grid = default_load_grid();
    /// lambda is filled in per grid point.
    SimConfig sim;
    std::string output_dir = ".";

    void validate() const {
        for (double l : load_grid) {
            if (!(l > 0.0 && l < 1.0)) {
                throw ValidationError("load grid values must lie in (0, 1); got " + std::to_string(l));
            }
        }
        if ((mode == Mode::simulate || mode == Mode::validate) && load_grid.empty()) {
            throw ValidationError("load grid is empty");
        }
    }
};

/// Parses "0.5,0.8,0.9". Whitespace around entries is ignored.
inline std::vector<double> parse_load_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto first = item.find_first_not_of(" \t");
        if (first == std::string::npos) {
            throw ValidationError("empty entry in load list \"" + text + "\"");
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item.substr(first), &used);
        } catch (const std::exception&) {
            throw ValidationError("not a number in load list: \"" + item + "\"");
        }
        if (item.find_first_not_of(" \t", first + used) != std::string::npos) {
            throw ValidationError("not a number in load list: \"" + item + "\"");
        }
        out.push_back(v);
    }
    return out;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hash of the canonical JSON form, so formatting differences in the file do not matter.
inline std::string spec_hash(const WorkloadSpec& spec) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json(spec).dump());
    return out.str();
}

namespace detail {

inline std::vector<double> ranks(std::span<const double> xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> r(xs.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            r[order[t]] = avg;
        }
        i = j + 1;
    }
    return r;
}

} // namespace detail

/// Pearson correlation; NaN when either side is constant or fewer than two points.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ValidationError("correlation: inputs differ in length");
    }
    const std::size_t n = x.size();
    if (n < 2) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return sxy / std::sqrt(sxx * syy);
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ValidationError("correlation: inputs differ in length");
    }
    const auto rx = detail::ranks(x);
    const auto ry = detail::ranks(y);
    return pearson(rx, ry);
}

namespace detail {

/// 12 significant digits; empty for NaN.
inline std::string num(double v) {
    if (std::isnan(v)) {
        return "";
    }
    std::ostringstream out;
    out << std::setprecision(12) << v;
    return out.str();
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    }
    return out + "\"";
}

} // namespace detail

// ---------------------------------------------------------------- analyze

struct AnalysisReport {
    std::string chain_kind;
    LabeledCTMC chain;
    MarcSolution solution;
    double generator_residual = 0.0;
    /// Present when the two-server closed form was requested.
    std::optional<MarcSolution> closed_form;
};

inline AnalysisReport run_analysis(const WorkloadSpec& spec, bool full_sat = false,
                                   std::size_t cap = kDefaultStateCap, bool with_closed_form = false) {
    std::optional<MarcSolution> closed;
    if (with_closed_form) {
        closed = closed_form_k2(k2_params_from(spec));
    }
    auto chain = full_sat ? build_saturated_chain(spec, cap) : build_sss_chain(spec, cap);
    auto sol = analyze(chain);
    const double residual = generator_residual(chain, sol);
    return {full_sat ? "sat" : "sss", std::move(chain), std::move(sol), residual, std::move(closed)};
}

inline nlohmann::json solution_json(const LabeledCTMC& chain, const MarcSolution& s) {
    return {{"lambda_star", s.lambda_star}, {"states", chain.labels()}, {"stationary", s.stationary},
            {"departure", s.departure},     {"delta", s.delta},         {"delta_yd", s.delta_yd}};
}

inline nlohmann::json analysis_json(const AnalysisReport& r) {
    auto doc = solution_json(r.chain, r.solution);
    doc["chain"] = r.chain_kind;
    doc["generator_residual"] = r.generator_residual;
    if (r.closed_form) {
        const auto& c = *r.closed_form;
        double gap = std::abs(c.lambda_star - r.solution.lambda_star);
        gap = std::max(gap, std::abs(c.delta_yd - r.solution.delta_yd));
        doc["closed_form_k2"] = {{"lambda_star", c.lambda_star}, {"stationary", c.stationary},
                                 {"departure", c.departure},     {"delta", c.delta},
                                 {"delta_yd", c.delta_yd},       {"max_abs_gap_vs_numeric", gap}};
    }
    return doc;
}

inline void write_analysis_csv(std::ostream& out, const AnalysisReport& r) {
    out << "state,pi,yd,delta\n";
    for (std::size_t y = 0; y < r.chain.size(); ++y) {
        out << detail::csv_field(r.chain.label(y)) << ',' << detail::num(r.solution.stationary[y]) << ','
            << detail::num(r.solution.departure[y]) << ',' << detail::num(r.solution.delta[y]) << '\n';
    }
}

/// "(1/λ*)(1+Δ(Y_d))/(1−λ/λ*)" with the numbers filled in.
inline std::string dominant_term_text(const MarcSolution& s) {
    const std::string ls = detail::num(s.lambda_star);
    return "E[T] ~ (1/λ*)(1+Δ(Y_d))/(1−λ/λ*) = (1/" + ls + ")(1+" + detail::num(s.delta_yd) + ")/(1−λ/" + ls + ")";
}

/// Chain dump: transitions CSV plus a legend mapping indices to state labels.
inline void write_chain_dump(std::ostream& transitions, std::ostream& legend, const LabeledCTMC& chain) {
    transitions << "from_state,to_state,completions,rate\n";
    for (const auto& t : chain.transitions()) {
        transitions << t.from << ',' << t.to << ',' << t.completions << ',' << detail::num(t.rate) << '\n';
    }
    legend << "index,state\n";
    for (std::size_t y = 0; y < chain.size(); ++y) {
        legend << y << ',' << detail::csv_field(chain.label(y)) << '\n';
    }
}

// ---------------------------------------------------------------- simulate

enum class SystemKind { msj, mmsr, ak, coupled };

inline std::string_view to_string(SystemKind s) {
    switch (s) {
    case SystemKind::msj: return "msj";
    case SystemKind::mmsr: return "mmsr";
    case SystemKind::ak: return "ak";
    case SystemKind::coupled: return "coupled";
    }
    return "?";
}

inline SystemKind parse_system(std::string_view s) {
    for (auto k : {SystemKind::msj, SystemKind::mmsr, SystemKind::ak, SystemKind::coupled}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw ValidationError("unknown system \"" + std::string(s) + "\" (expected msj, mmsr, ak or coupled)");
}

struct SimulateRow {
    SystemKind system = SystemKind::msj;
    double lambda = 0.0;
    double load = 0.0;
    SimResult result;
    std::uint64_t n_arrivals = 0;
    std::uint64_t seed = 0;
};

inline SimResult simulate_system(SystemKind system, const WorkloadSpec& spec, const LabeledCTMC& chain,
                                 const SimConfig& cfg) {
    switch (system) {
    case SystemKind::msj: return simulate_msj(spec, cfg);
    case SystemKind::mmsr: return simulate_mmsr(chain, cfg);
    case SystemKind::ak: return simulate_atleastk(spec, cfg);
    case SystemKind::coupled: return simulate_coupled(spec, cfg);
    }
    throw ValidationError("unknown system");
}

/// One simulation per grid load, dispatched concurrently; rows come back in grid order.
/// `chain` drives the mmsr system and `lambda_star` turns loads into rates.
inline std::vector<SimulateRow> run_simulations(SystemKind system, const WorkloadSpec& spec, const LabeledCTMC& chain,
                                                double lambda_star, const ExperimentPlan& plan) {
    plan.validate();
    std::vector<SimulateRow> rows(plan.load_grid.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        SimConfig cfg = plan.sim;
        cfg.lambda = plan.load_grid[i] * lambda_star;
        rows[i] = {system, cfg.lambda, plan.load_grid[i], simulate_system(system, spec, chain, cfg), cfg.n_arrivals,
                   cfg.seed};
    });
    return rows;
}

inline void write_simulate_csv(std::ostream& out, std::span<const SimulateRow> rows) {
    using detail::num;
    out << "system,lambda,lambda_over_lambda_star,mean_T,ci_T,mean_N,ci_N,p_empty,ci_empty,mismatch,ci_mismatch,"
           "n_arrivals,seed\n";
    for (const auto& r : rows) {
        const auto& s = r.result;
        out << to_string(r.system) << ',' << num(r.lambda) << ',' << num(r.load) << ',' << num(s.mean_T.mean) << ','
            << num(s.mean_T.half_width) << ',' << num(s.mean_N.mean) << ',' << num(s.mean_N.half_width) << ','
            << num(s.p_queue_empty.mean) << ',' << num(s.p_queue_empty.half_width) << ','
            << (s.mismatch_fraction ? num(s.mismatch_fraction->mean) : "") << ','
            << (s.mismatch_fraction ? num(s.mismatch_fraction->half_width) : "") << ',' << r.n_arrivals << ','
            << r.seed << '\n';
    }
}

// ---------------------------------------------------------------- validate

struct ValidateRow {
    double load = 0.0;
    double lambda = 0.0;
    double sim_T = 0.0;
    double ci_T = 0.0;
    double pred_T = 0.0;
    /// |sim_T - pred_T|, the offset the dominant term leaves out
    double abs_gap = 0.0;
    /// |sim_T - pred_T| / sim_T
    double rel_error = 0.0;
    SimResult result;
};

struct ValidateReport {
    std::vector<ValidateRow> rows;
    /// Spearman correlation of rel_error against load; a non-positive value
    /// means the error shrinks toward saturation.
    double rel_error_trend = 0.0;
};

inline ValidateReport run_validate(const WorkloadSpec& spec, const MarcSolution& sol, const ExperimentPlan& plan) {
    plan.validate();
    ValidateReport report;
    report.rows.resize(plan.load_grid.size());
    parallel_for(report.rows.size(), [&](std::size_t i) {
        SimConfig cfg = plan.sim;
        cfg.lambda = plan.load_grid[i] * sol.lambda_star;
        const auto sim = simulate_msj(spec, cfg);
        const double pred = predict(sol, cfg.lambda).mean_T;
        report.rows[i] = {plan.load_grid[i],
                          cfg.lambda,
                          sim.mean_T.mean,
                          sim.mean_T.half_width,
                          pred,
                          std::abs(sim.mean_T.mean - pred),
                          std::abs(sim.mean_T.mean - pred) / sim.mean_T.mean,
                          sim};
    });
    std::vector<double> loads, errors;
    for (const auto& r : report.rows) {
        loads.push_back(r.load);
        errors.push_back(r.rel_error);
    }
    report.rel_error_trend = spearman(loads, errors);
    return report;
}

inline void write_validate_csv(std::ostream& out, const ValidateReport& report) {
    using detail::num;
    out << "load,sim_T,ci_T,pred_T,abs_gap,rel_error\n";
    for (const auto& r : report.rows) {
        out << num(r.load) << ',' << num(r.sim_T) << ',' << num(r.ci_T) << ',' << num(r.pred_T) << ','
            << num(r.abs_gap) << ',' << num(r.rel_error) << '\n';
    }
}

// ---------------------------------------------------------------- sweep

/// Two-class family on k servers: need-1 jobs with probability p1 and rate mu1,
/// need-k jobs with rate 1. The mu1 family fixes p1 = 1/2 and spaces mu1
/// geometrically over [0.01, 100]; the p1 family fixes mu1 = 1/k and steps p1
/// evenly over (0, 1).
enum class SweepFamily { mu1, p1 };

inline SweepFamily parse_family(std::string_view s) {
    if (s == "mu1") {
        return SweepFamily::mu1;
    }
    if (s == "p1") {
        return SweepFamily::p1;
    }
    throw ValidationError("unknown sweep family \"" + std::string(s) + "\" (expected mu1 or p1)");
}

struct SweepPlan {
    SweepFamily family = SweepFamily::mu1;
    int k = 5;
    /// Family default when unset: 100 for mu1, 99 for p1.
    std::optional<std::size_t> points;
    double load = 0.8;
    SimConfig sim;

    std::size_t resolved_points() const {
        if (points) {
            return *points;
        }
        return family == SweepFamily::mu1 ? 100 : 99;
    }
};

inline std::vector<double> sweep_parameters(SweepFamily family, std::size_t points) {
    if (points == 0) {
        throw ValidationError("sweep grid is empty");
    }
    std::vector<double> out(points);
    for (std::size_t i = 0; i < points; ++i) {
        if (family == SweepFamily::mu1) {
            const double t = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
            out[i] = std::pow(10.0, -2.0 + 4.0 * t);
        } else {
            out[i] = static_cast<double>(i + 1) / static_cast<double>(points + 1);
        }
    }
    return out;
}

inline WorkloadSpec sweep_workload(SweepFamily family, int k, double param) {
    if (k < 2) {
        throw ValidationError("sweep family needs k >= 2");
    }
    const double p1 = family == SweepFamily::p1 ? param : 0.5;
    const double mu1 = family == SweepFamily::mu1 ? param : 1.0 / static_cast<double>(k);
    return WorkloadSpec(k, {exponential_class(1, p1, mu1), exponential_class(k, 1.0 - p1, 1.0)});
}

struct SweepRow {
    double param = 0.0;
    double lambda_star = 0.0;
    double delta_yd = 0.0;
    double sim_T = 0.0;
    double pred_T = 0.0;
    /// (pred_T - sim_T) / sim_T, signed
    double rel_error = 0.0;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    /// Squared Pearson correlation between delta_yd and rel_error.
    double r_squared = 0.0;
};

inline SweepReport run_sweep(const SweepPlan& plan) {
    if (!(plan.load > 0.0 && plan.load < 1.0)) {
        throw ValidationError("sweep load must lie in (0, 1)");
    }
    const auto params = sweep_parameters(plan.family, plan.resolved_points());
    SweepReport report;
    report.rows.resize(params.size());
    parallel_for(params.size(), [&](std::size_t i) {
        const auto spec = sweep_workload(plan.family, plan.k, params[i]);
        const auto sol = analyze(build_sss_chain(spec));
        SimConfig cfg = plan.sim;
        cfg.lambda = plan.load * sol.lambda_star;
        const double sim = simulate_msj(spec, cfg).mean_T.mean;
        const double pred = predict(sol, cfg.lambda).mean_T;
        report.rows[i] = {params[i], sol.lambda_star, sol.delta_yd, sim, pred, (pred - sim) / sim};
    });
    std::vector<double> d, e;
    for (const auto& r : report.rows) {
        d.push_back(r.delta_yd);
        e.push_back(r.rel_error);
    }
    const double r = pearson(d, e);
    report.r_squared = r * r;
    return report;
}

inline void write_sweep_csv(std::ostream& out, SweepFamily family, const SweepReport& report) {
    using detail::num;
    out << (family == SweepFamily::mu1 ? "mu1" : "p1") << ",lambda_star,delta_yd,sim_T,pred_T,rel_error\n";
    for (const auto& r : report.rows) {
        out << num(r.param) << ',' << num(r.lambda_star) << ',' << num(r.delta_yd) << ',' << num(r.sim_T) << ','
            << num(r.pred_T) << ',' << num(r.rel_error) << '\n';
    }
}

// ---------------------------------------------------------------- manifest

/// Everything needed to rerun a command and get identical files.
inline nlohmann::json make_manifest(std::string_view command, const std::vector<std::string>& argv,
                                    const std::optional<WorkloadSpec>& spec, const std::string& spec_path,
                                    const SimConfig& sim, const std::vector<std::string>& outputs) {
    nlohmann::json m;
    m["tool"] = "marc-queue";
    m["version"] = std::string(kVersion);
    m["command"] = std::string(command);
    m["argv"] = argv;
    m["compiler"] = __VERSION__;
    m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    if (spec) {
        m["spec_path"] = spec_path;
        m["spec_hash_fnv1a64"] = spec_hash(*spec);
        m["spec"] = to_json(*spec);
    }
    m["seed"] = sim.seed;
    m["replications"] = sim.replications;
    m["substreams"] = "seed_seq(seed, replication, role)";
    m["n_arrivals"] = sim.n_arrivals;
    m["warmup_fraction"] = sim.warmup_fraction;
    m["outputs"] = outputs;
    return m;
}

inline void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path);
    }
    out << contents;
    if (!out) {
        throw Error("failed writing " + path);
    }
}

} // namespace marcq
