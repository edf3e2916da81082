// Command-line front end: reads an experiment config, runs one experiment
// and writes versioned CSV/JSON artifacts into the output directory.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure,
// 1 for anything else (for example an unwritable output directory).

#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kbp/config.hpp"
#include "kbp/finite_type.hpp"
#include "kbp/fixed_point.hpp"
#include "kbp/io.hpp"
#include "kbp/model.hpp"
#include "kbp/neural.hpp"
#include "kbp/operators.hpp"
#include "kbp/oracles.hpp"
#include "kbp/poisson.hpp"
#include "kbp/resilience.hpp"
#include "kbp/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_other = 1;
constexpr int exit_config = 2;
constexpr int exit_numeric = 3;

struct Overrides {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

struct Setup {
    kbp::ExperimentConfig config;
    fs::path out;
    kbp::TypeGrid grid;
    kbp::KernelModel kernel;
    kbp::ThresholdMeasure measure;
};

Setup prepare(const Overrides& o) {
    kbp::ExperimentConfig cfg = kbp::load_config(o.config);
    if (o.seed) {
        cfg.solver.seed = *o.seed;
        cfg.simulation.base_seed = *o.seed;
    }
    if (o.threads) cfg.simulation.threads = *o.threads;
    if (!o.out.empty()) cfg.output = o.out;
    kbp::TypeGrid grid = kbp::build_uniform_grid(cfg.grid_cells);
    kbp::KernelModel kernel = kbp::build_kernel(cfg, grid);
    kbp::ThresholdMeasure measure = kbp::build_measure(cfg, grid);
    fs::path out = cfg.output;
    fs::create_directories(out);
    kbp::io::write_json(out / "config.resolved.json", kbp::to_json(cfg));
    return {std::move(cfg), std::move(out), std::move(grid), std::move(kernel), std::move(measure)};
}

kbp::OperatorContext context(const Setup& s) {
    try {
        return kbp::OperatorContext(s.grid, s.kernel, s.measure);
    } catch (const kbp::InvalidArgument& e) {
        throw kbp::ConfigError(e.what());
    }
}

void cmd_solve(const Setup& s) {
    const kbp::OperatorContext ctx = context(s);
    const kbp::FixedPointResult picard = kbp::solve_picard(ctx, kbp::picard_options(s.config));
    json doc;
    const kbp::GridFunction* f_hat = &picard.f_hat;
    std::optional<kbp::NeuralResult> nn;
    if (s.config.solver.nn) {
        kbp::NeuralApproximator net(kbp::layer_sizes(s.config.solver), s.config.solver.gamma, s.config.solver.seed);
        nn = kbp::solve_nn(ctx, std::move(net), kbp::neural_options(s.config));
        f_hat = &nn->fixed_point.f_hat;
        doc = kbp::io::fixed_point_json(nn->fixed_point, "nn", s.measure.tail_mass);
        doc["reference_integral"] = kbp::io::number(picard.integral);
        doc["sample_residual"] = kbp::io::number(nn->sample_residual);
    } else {
        doc = kbp::io::fixed_point_json(picard, "picard", s.measure.tail_mass);
    }
    doc["grid_size"] = s.grid.cell_count();
    doc["kernel_name"] = s.kernel.name;
    kbp::io::write_json(s.out / "fixedpoint.json", doc);
    kbp::io::write_fhat_csv(s.out / "fhat.csv", s.grid, *f_hat);
    if (s.config.solver.trace) {
        kbp::io::write_trace_csv(s.out / "trace.csv", picard.trace);
        if (nn) {
            auto out = kbp::io::open_output(s.out / "nn_trace.csv");
            out << "# schema: " << kbp::io::schema("nn_trace") << '\n' << "step,objective\n";
            for (std::size_t i = 0; i < nn->objective_trace.size(); ++i) out << i << ',' << nn->objective_trace[i] << '\n';
        }
    }
    std::cout << "integral " << doc["integral"] << " residual " << doc["residual"] << " derivative condition "
              << doc["derivative_condition"]["status"] << '\n';
}

void cmd_simulate(const Setup& s) {
    const kbp::OperatorContext ctx = context(s);
    kbp::PicardOptions popt = kbp::picard_options(s.config);
    popt.check_derivative_condition = false;
    const kbp::FixedPointResult picard = kbp::solve_picard(ctx, popt);
    const kbp::SimulationSetup setup{s.kernel, s.measure, s.grid, kbp::sample_options(s.config)};
    const auto& sim = s.config.simulation;
    std::vector<kbp::MonteCarloSummary> summaries;
    for (std::size_t n : sim.n) {
        summaries.push_back(kbp::monte_carlo(setup, n, sim.runs, sim.base_seed, sim.bins, sim.threads));
        const auto& m = summaries.back();
        std::cout << "n " << n << " mean " << m.mean << " std " << m.std_dev << " min " << m.min << " max " << m.max
                  << '\n';
    }
    kbp::io::write_runs_csv(s.out / "runs.csv", summaries);
    std::size_t largest = 0;
    for (std::size_t i = 1; i < summaries.size(); ++i)
        if (summaries[i].n > summaries[largest].n) largest = i;
    kbp::io::write_bins_csv(s.out / "bins.csv", summaries[largest], s.grid, picard.f_hat);
    kbp::io::write_json(s.out / "summary.json", kbp::io::summary_json(summaries, picard.integral));
}

void cmd_finite(const Setup& s) {
    const kbp::FiniteTypeSystem sys = kbp::build_finite_system(s.config, s.kernel, s.grid, s.measure);
    const kbp::FirstJointZero zero = kbp::first_joint_zero(sys);
    const double margin = kbp::derivative_condition_finite(sys, zero.z_hat, kbp::uniform_direction(sys.type_count));
    json doc = kbp::io::finite_json(sys, zero, margin);
    if (!s.config.finite.explicit_system()) {
        auto [upper, lower] = kbp::make_step_kernels(s.kernel, s.grid, s.config.finite.level);
        const kbp::OperatorContext step_ctx(s.grid, s.config.finite.side == "upper" ? upper : lower, s.measure);
        kbp::PicardOptions popt = kbp::picard_options(s.config);
        popt.check_derivative_condition = false;
        doc["level"] = s.config.finite.level;
        doc["side"] = s.config.finite.side;
        doc["step_kernel_integral"] = kbp::io::number(kbp::solve_picard(step_ctx, popt).integral);
    }
    kbp::io::write_json(s.out / "finite.json", doc);
    std::cout << "tau_hat " << zero.tau_hat << " derivative margin " << margin << '\n';
}

void cmd_sandwich(const Setup& s) {
    const kbp::OperatorContext ctx = context(s);
    const kbp::PicardOptions popt = kbp::picard_options(s.config);
    kbp::PicardOptions base_opt = popt;
    base_opt.check_derivative_condition = false;
    const double base = kbp::solve_picard(ctx, base_opt).integral;
    const auto levels = kbp::coupling_sandwich(ctx, s.config.sandwich.levels, popt);
    kbp::io::write_sandwich_csv(s.out / "sandwich.csv", levels);
    kbp::io::write_json(s.out / "sandwich.json", kbp::io::sandwich_json(levels, base));
    for (const auto& l : levels)
        std::cout << "level " << l.level << " [" << l.lower_integral << ", " << l.upper_integral << "]\n";
}

void cmd_resilience(const Setup& s) {
    const kbp::OperatorContext ctx = context(s);
    kbp::DerivativeMap map = [&] {
        try {
            return kbp::derivative_at_zero(ctx);
        } catch (const kbp::InvalidArgument& e) {
            throw kbp::ConfigError(e.what());
        }
    }();
    const auto verdict = kbp::classify(map, s.config.resilience.band, s.config.resilience.power_steps);
    kbp::io::write_json(s.out / "resilience.json", kbp::io::resilience_json(verdict, s.grid.cell_count(), s.kernel.name));
    std::cout << "spectral radius " << verdict.spectral_radius << " verdict " << kbp::to_string(verdict.verdict) << '\n';
}

/// Reference values from the independent oracles, for regenerating the
/// constants frozen into the test suite.
void cmd_oracle(const fs::path& out, std::size_t cells) {
    namespace orc = kbp::oracle;
    const kbp::TypeGrid grid = kbp::build_uniform_grid(cells);
    auto nodes = grid.midpoints();
    auto weights = grid.weights();
    const std::vector<std::pair<std::size_t, double>> scalar_shares{{0, 0.1}, {1, 0.9}};
    json cases = json::array();
    for (const auto& c : orc::rank_one_cases()) {
        auto phi = [&c](double x) { return c.phi(x); };
        const auto [t, integral] = orc::rank_one_fixed_point(phi, c.seed_share, nodes, weights);
        cases.push_back({{"label", c.label},
                         {"phi_coefficients", c.phi_coefficients},
                         {"seed_share", c.seed_share},
                         {"t", t},
                         {"integral", integral}});
    }
    auto two_x = [](double x) { return 2.0 * x; };
    const json doc = {
        {"schema", kbp::io::schema("oracle")},
        {"grid_size", cells},
        {"scalar_constant2_seed0.1_threshold1", orc::constant_kernel_fixed_point(2.0, scalar_shares)},
        {"poisson_pmf_2_1", orc::poisson_pmf(2, 1.0)},
        {"poisson_pmf_50_10", orc::poisson_pmf(50, 10.0)},
        {"rank_one_eigenvalue_2x_grid", orc::rank_one_eigenvalue(two_x, nodes, weights)},
        {"rank_one_eigenvalue_2x_exact", 4.0 / 3.0},
        {"rank_one_fixed_points", cases},
    };
    fs::create_directories(out);
    kbp::io::write_json(out / "oracle.json", doc);
    std::cout << doc.dump(2) << '\n';
}

template <class Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        return exit_ok;
    } catch (const kbp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const kbp::ConvergenceFailure& e) {
        std::cerr << "numeric failure: " << e.what() << " (residual " << e.residual() << ")\n";
        return exit_numeric;
    } catch (const kbp::InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::logic_error& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return exit_numeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_other;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bootstrap percolation on kernel-based inhomogeneous random graphs"};
    app.require_subcommand(1);

    Overrides o;
    std::size_t oracle_cells = 1000;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", o.config, "experiment config (JSON)");
        if (config_required) opt->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "output directory (overrides the config)");
        sub->add_option("--seed", o.seed, "seed for training and simulation (overrides the config)");
        sub->add_option("--threads", o.threads, "Monte Carlo worker threads")->check(CLI::PositiveNumber);
    };

    struct Command {
        const char* name;
        const char* help;
        void (*run)(const Setup&);
    };
    const std::vector<Command> commands{
        {"solve", "minimal fixed point: fixedpoint.json, fhat.csv", cmd_solve},
        {"simulate", "Monte Carlo percolation: runs.csv, bins.csv, summary.json", cmd_simulate},
        {"finite", "finite-type first joint zero: finite.json", cmd_finite},
        {"sandwich", "step-kernel bracketing: sandwich.csv, sandwich.json", cmd_sandwich},
        {"resilience", "spectral resilience verdict: resilience.json", cmd_resilience},
    };
    std::vector<CLI::App*> subs;
    for (const auto& c : commands) {
        subs.push_back(app.add_subcommand(c.name, c.help));
        add_common(subs.back(), true);
    }
    CLI::App* oracle = app.add_subcommand("oracle", "independent reference values: oracle.json");
    add_common(oracle, false);
    oracle->add_option("--cells", oracle_cells, "grid size for quadrature-based oracles")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    if (oracle->parsed())
        return guarded([&] { cmd_oracle(o.out.empty() ? fs::path("out") : fs::path(o.out), oracle_cells); });
    for (std::size_t i = 0; i < commands.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        return guarded([&] {
            const Setup s = prepare(o);
            commands[i].run(s);
        });
    }
    return exit_other;
}
