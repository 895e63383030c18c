// marc-queue: analyze a multiserver-job workload, simulate it, and compare the
// simulated mean response time against the predicted dominant term.
//
// Exit codes: 0 success, 2 invalid input or usage, 3 numeric failure
// (including the state cap), 4 simulation instability, 1 anything else.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "marcq/marcq.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string spec_path;
    std::optional<std::string> loads;
    std::uint64_t arrivals = 1'000'000;
    std::uint64_t seed = 1;
    std::size_t reps = 10;
    double warmup = 0.1;
    std::string out = ".";
    bool closed_form_k2 = false;
    bool full_sat = false;
    std::size_t cap = marcq::kDefaultStateCap;
    bool dump_chain = false;
    std::string system = "msj";
    bool check_invariants = false;
    std::string family;
    int k = 5;
    std::optional<std::size_t> points;
    double load = 0.8;
};

marcq::SimConfig sim_config(const Options& o) {
    marcq::SimConfig cfg;
    cfg.lambda = 1.0; // replaced per grid point
    cfg.n_arrivals = o.arrivals;
    cfg.warmup_fraction = o.warmup;
    cfg.seed = o.seed;
    cfg.replications = o.reps;
    cfg.check_invariants = o.check_invariants;
    cfg.validate();
    return cfg;
}

marcq::ExperimentPlan make_plan(const Options& o, marcq::Mode mode) {
    marcq::ExperimentPlan plan;
    plan.spec_path = o.spec_path;
    plan.mode = mode;
    if (o.loads) {
        plan.load_grid = marcq::parse_load_list(*o.loads);
    }
    plan.sim = sim_config(o);
    plan.output_dir = o.out;
    plan.validate();
    return plan;
}

std::string out_path(const Options& o, const std::string& name) { return (fs::path(o.out) / name).string(); }

std::string render(auto&& writer) {
    std::ostringstream s;
    writer(s);
    return s.str();
}

void write_manifest(const Options& o, std::string_view command, const std::vector<std::string>& argv,
                    const std::optional<marcq::WorkloadSpec>& spec, const marcq::SimConfig& sim,
                    const std::vector<std::string>& outputs) {
    const auto manifest = marcq::make_manifest(command, argv, spec, o.spec_path, sim, outputs);
    marcq::write_text_file(out_path(o, std::string(command) + "_manifest.json"), manifest.dump(2) + "\n");
}

int cmd_analyze(const Options& o, const std::vector<std::string>& argv) {
    const auto spec = marcq::load_spec(o.spec_path);
    const auto report = marcq::run_analysis(spec, o.full_sat, o.cap, o.closed_form_k2);
    const auto& s = report.solution;

    std::vector<std::string> outputs = {"analysis.json", "analysis.csv"};
    marcq::write_text_file(out_path(o, "analysis.json"), marcq::analysis_json(report).dump(2) + "\n");
    marcq::write_text_file(out_path(o, "analysis.csv"),
                           render([&](std::ostream& out) { marcq::write_analysis_csv(out, report); }));
    if (o.dump_chain) {
        std::ostringstream transitions, legend;
        marcq::write_chain_dump(transitions, legend, report.chain);
        marcq::write_text_file(out_path(o, "chain_transitions.csv"), transitions.str());
        marcq::write_text_file(out_path(o, "chain_states.csv"), legend.str());
        outputs.push_back("chain_transitions.csv");
        outputs.push_back("chain_states.csv");
    }
    marcq::SimConfig sim;
    sim.seed = o.seed;
    write_manifest(o, "analyze", argv, spec, sim, outputs);

    std::cout << "chain: " << report.chain_kind << ", " << report.chain.size() << " states\n"
              << "lambda*: " << marcq::detail::num(s.lambda_star) << '\n'
              << "Delta(Y_d): " << marcq::detail::num(s.delta_yd) << '\n'
              << "dominant term: " << marcq::dominant_term_text(s) << '\n'
              << "generator residual: " << report.generator_residual << '\n';
    if (report.closed_form) {
        const auto& c = *report.closed_form;
        std::cout << "closed form k=2: lambda* " << marcq::detail::num(c.lambda_star) << ", Delta(Y_d) "
                  << marcq::detail::num(c.delta_yd) << '\n';
    }
    return 0;
}

int cmd_simulate(const Options& o, const std::vector<std::string>& argv) {
    const auto spec = marcq::load_spec(o.spec_path);
    const auto plan = make_plan(o, marcq::Mode::simulate);
    const auto system = marcq::parse_system(o.system);
    const auto chain = o.full_sat ? marcq::build_saturated_chain(spec, o.cap) : marcq::build_sss_chain(spec, o.cap);
    const auto sol = marcq::analyze(chain);
    const auto rows = marcq::run_simulations(system, spec, chain, sol.lambda_star, plan);
    const auto csv = render([&](std::ostream& out) { marcq::write_simulate_csv(out, rows); });
    marcq::write_text_file(out_path(o, "simulate.csv"), csv);
    write_manifest(o, "simulate", argv, spec, plan.sim, {"simulate.csv"});
    std::cout << csv;
    return 0;
}

int cmd_validate(const Options& o, const std::vector<std::string>& argv) {
    const auto spec = marcq::load_spec(o.spec_path);
    const auto plan = make_plan(o, marcq::Mode::validate);
    const auto report = marcq::run_analysis(spec, o.full_sat, o.cap);
    const auto result = marcq::run_validate(spec, report.solution, plan);
    const auto csv = render([&](std::ostream& out) { marcq::write_validate_csv(out, result); });
    marcq::write_text_file(out_path(o, "validate.csv"), csv);
    write_manifest(o, "validate", argv, spec, plan.sim, {"validate.csv"});
    std::cout << csv << "lambda*: " << marcq::detail::num(report.solution.lambda_star)
              << ", Delta(Y_d): " << marcq::detail::num(report.solution.delta_yd) << '\n'
              << "Spearman(load, rel_error): " << marcq::detail::num(result.rel_error_trend)
              << (result.rel_error_trend <= 0.0 ? " (non-increasing trend)" : " (error does not shrink with load)")
              << '\n';
    return 0;
}

int cmd_sweep(const Options& o, const std::vector<std::string>& argv) {
    marcq::SweepPlan plan;
    plan.family = marcq::parse_family(o.family);
    plan.k = o.k;
    plan.points = o.points;
    plan.load = o.load;
    plan.sim = sim_config(o);
    const auto report = marcq::run_sweep(plan);
    const auto csv = render([&](std::ostream& out) { marcq::write_sweep_csv(out, plan.family, report); });
    marcq::write_text_file(out_path(o, "sweep.csv"), csv);
    write_manifest(o, "sweep", argv, std::nullopt, plan.sim, {"sweep.csv"});
    std::cout << csv << "R^2(delta_yd, rel_error): " << marcq::detail::num(report.r_squared) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Response-time prediction and simulation for multiserver-job FCFS queues", "marc-queue"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(marcq::kVersion));

    Options o;
    auto add_common = [&](CLI::App* sub, bool needs_spec) {
        auto* spec = sub->add_option("--spec", o.spec_path, "Workload JSON file");
        if (needs_spec) {
            spec->required()->check(CLI::ExistingFile);
        }
        sub->add_option("--out", o.out, "Output directory (created if missing)")->capture_default_str();
        sub->add_option("--seed", o.seed, "Master random seed")->capture_default_str();
        sub->add_option("--cap", o.cap, "Maximum number of chain states")->capture_default_str();
        sub->add_flag("--full-sat", o.full_sat, "Use the full saturated chain instead of the simplified one");
    };
    auto add_sim = [&](CLI::App* sub) {
        sub->add_option("--arrivals", o.arrivals, "Arrivals per replication")->capture_default_str();
        sub->add_option("--reps", o.reps, "Independent replications")->capture_default_str();
        sub->add_option("--warmup", o.warmup, "Fraction of arrivals discarded as warmup")->capture_default_str();
        sub->add_flag("--check-invariants", o.check_invariants, "Verify front invariants at every event (slow)");
    };

    auto* analyze = app.add_subcommand("analyze", "Solve the service-process chain and print the prediction");
    add_common(analyze, true);
    analyze->add_flag("--closed-form-k2", o.closed_form_k2, "Also evaluate the two-server closed form");
    analyze->add_flag("--dump-chain", o.dump_chain, "Write the chain's transitions and state legend");

    auto* simulate = app.add_subcommand("simulate", "Simulate one system over a load grid");
    add_common(simulate, true);
    add_sim(simulate);
    simulate->add_option("--loads", o.loads, "Comma-separated loads lambda/lambda* in (0,1)");
    simulate->add_option("--system", o.system, "msj, mmsr, ak or coupled")->capture_default_str();

    auto* validate = app.add_subcommand("validate", "Compare simulated and predicted mean response time");
    add_common(validate, true);
    add_sim(validate);
    validate->add_option("--loads", o.loads, "Comma-separated loads lambda/lambda* in (0,1)");

    auto* sweep = app.add_subcommand("sweep", "Delta(Y_d) against relative error over a workload family");
    add_common(sweep, false);
    add_sim(sweep);
    sweep->add_option("--family", o.family, "mu1 or p1")->required();
    sweep->add_option("--k", o.k, "Servers (need-1 and need-k classes)")->capture_default_str();
    sweep->add_option("--points", o.points, "Grid size (default 100 for mu1, 99 for p1)");
    sweep->add_option("--load", o.load, "Fixed load lambda/lambda*")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::vector<std::string> args(argv + 1, argv + argc);
    try {
        fs::create_directories(o.out);
        if (analyze->parsed()) {
            return cmd_analyze(o, args);
        }
        if (simulate->parsed()) {
            return cmd_simulate(o, args);
        }
        if (validate->parsed()) {
            return cmd_validate(o, args);
        }
        return cmd_sweep(o, args);
    } catch (const marcq::InstabilityError& e) {
        std::cerr << "instability: " << e.what() << '\n';
        return 4;
    } catch (const marcq::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const marcq::ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
