#pragma once

// Experiment configuration: a JSON document describing the kernel, the
// threshold law, the grid and the settings of each experiment. Unknown keys
// are rejected so that typos surface as configuration errors.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kbp/errors.hpp"
#include "kbp/finite_type.hpp"
#include "kbp/fixed_point.hpp"
#include "kbp/model.hpp"
#include "kbp/neural.hpp"
#include "kbp/simulator.hpp"

namespace kbp {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SolverConfig {
    double tolerance = 1e-10;
    std::size_t max_iterations = 10000;
    bool nn = false;
    double gamma = 1e-3;
    std::vector<std::size_t> hidden{20, 20};
    std::string optimizer = "gradient_descent";
    double learning_rate = 0.3;
    std::size_t hold_steps = 5000;
    double decay = 0.5;
    std::size_t decay_every = 10000;
    double learning_rate_floor = 1e-5;
    double momentum = 0.9;
    double stop_epsilon = 0.0;  // non-positive: 1e-3 (1 + gamma)
    std::size_t max_steps = 50000;
    std::size_t sample_count = 200;
    std::uint64_t seed = 0;
    double initial_level = 0.5;
    bool trace = false;
};

struct SimulationConfig {
    std::vector<std::size_t> n{3000};
    std::size_t runs = 200;
    std::size_t bins = 1000;
    std::uint64_t base_seed = 0;
    std::string sampler = "dense";  // dense, skip
    unsigned threads = 1;
};

struct SandwichConfig {
    std::vector<std::size_t> levels{10, 50, 250};
};

/// Either a level (the system is collapsed from the grid's step kernel of
/// the chosen side) or an explicit kernel and mass table.
struct FiniteConfig {
    std::size_t level = 10;
    std::string side = "lower";
    std::vector<std::vector<double>> kernel;
    std::vector<std::vector<double>> masses;

    bool explicit_system() const { return !kernel.empty(); }
};

struct ResilienceConfig {
    double band = 1e-3;
    std::size_t power_steps = 200;
};

struct ExperimentConfig {
    std::string kernel = "case_study";
    std::vector<std::pair<std::size_t, double>> thresholds{{0, 0.1}, {2, 0.9}};
    std::string threshold_table;  // CSV path, one row per cell, one column per threshold
    std::size_t max_threshold = default_max_threshold;
    std::size_t grid_cells = 1000;
    SolverConfig solver;
    SimulationConfig simulation;
    SandwichConfig sandwich;
    FiniteConfig finite;
    ResilienceConfig resilience;
    std::string output = "out";
    std::filesystem::path base_dir = ".";  // relative paths resolve against this
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

inline void positive(double v, const std::string& what) {
    if (!(v > 0.0)) throw ConfigError(what + " must be positive");
}

inline std::vector<std::vector<double>> read_csv_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw ConfigError(path.string() + ": not a number: '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError(path.string() + ": no data rows");
    return rows;
}

inline std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(what + ": not a number: '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError(what + ": empty list");
    return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& doc, std::filesystem::path base_dir = ".") {
    using detail::read;
    ExperimentConfig c;
    c.base_dir = std::move(base_dir);
    detail::check_keys(doc, "config", {"schema", "kernel", "thresholds", "threshold_table", "max_threshold", "grid_cells",
                                       "solver", "simulation", "sandwich", "finite", "resilience", "output"});
    read(doc, "kernel", c.kernel, "config");
    read(doc, "threshold_table", c.threshold_table, "config");
    read(doc, "max_threshold", c.max_threshold, "config");
    read(doc, "grid_cells", c.grid_cells, "config");
    read(doc, "output", c.output, "config");
    if (doc.contains("thresholds")) {
        const auto& t = doc.at("thresholds");
        if (!t.is_object() || t.empty()) throw ConfigError("config.thresholds: expected a non-empty object");
        c.thresholds.clear();
        for (const auto& [key, value] : t.items()) {
            std::size_t k = 0;
            try {
                std::size_t used = 0;
                const long v = std::stol(key, &used);
                if (used != key.size() || v < 0) throw std::invalid_argument(key);
                k = static_cast<std::size_t>(v);
            } catch (const std::exception&) {
                throw ConfigError("config.thresholds: key '" + key + "' is not a non-negative integer");
            }
            if (!value.is_number()) throw ConfigError("config.thresholds: value for '" + key + "' is not a number");
            c.thresholds.emplace_back(k, value.get<double>());
        }
        double total = 0.0;
        for (const auto& [k, p] : c.thresholds) total += p;
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError("config.thresholds: shares must sum to one");
    }
    if (c.grid_cells == 0) throw ConfigError("config.grid_cells must be at least 1");

    if (doc.contains("solver")) {
        const auto& s = doc.at("solver");
        const std::string w = "config.solver";
        detail::check_keys(s, w, {"tolerance", "max_iterations", "nn", "gamma", "hidden", "optimizer",
                                  "learning_rate", "hold_steps", "decay", "decay_every", "learning_rate_floor",
                                  "momentum", "stop_epsilon", "max_steps", "sample_count", "seed", "initial_level",
                                  "trace"});
        SolverConfig& o = c.solver;
        read(s, "tolerance", o.tolerance, w);
        read(s, "max_iterations", o.max_iterations, w);
        read(s, "nn", o.nn, w);
        read(s, "gamma", o.gamma, w);
        read(s, "hidden", o.hidden, w);
        read(s, "optimizer", o.optimizer, w);
        read(s, "learning_rate", o.learning_rate, w);
        read(s, "hold_steps", o.hold_steps, w);
        read(s, "decay", o.decay, w);
        read(s, "decay_every", o.decay_every, w);
        read(s, "learning_rate_floor", o.learning_rate_floor, w);
        read(s, "momentum", o.momentum, w);
        read(s, "stop_epsilon", o.stop_epsilon, w);
        read(s, "max_steps", o.max_steps, w);
        read(s, "sample_count", o.sample_count, w);
        read(s, "seed", o.seed, w);
        read(s, "initial_level", o.initial_level, w);
        read(s, "trace", o.trace, w);
    }
    detail::positive(c.solver.tolerance, "config.solver.tolerance");
    if (!(c.solver.gamma > 0.0 && c.solver.gamma < 1.0)) throw ConfigError("config.solver.gamma must lie in (0,1)");
    if (c.solver.optimizer != "gradient_descent" && c.solver.optimizer != "momentum" && c.solver.optimizer != "adam")
        throw ConfigError("config.solver.optimizer must be gradient_descent, momentum or adam");
    detail::positive(c.solver.learning_rate, "config.solver.learning_rate");
    if (c.solver.decay_every == 0) throw ConfigError("config.solver.decay_every must be at least 1");
    if (c.solver.sample_count < 2) throw ConfigError("config.solver.sample_count must be at least 2");
    for (std::size_t h : c.solver.hidden)
        if (h == 0) throw ConfigError("config.solver.hidden: layer widths must be positive");

    if (doc.contains("simulation")) {
        const auto& s = doc.at("simulation");
        const std::string w = "config.simulation";
        detail::check_keys(s, w, {"n", "runs", "bins", "base_seed", "sampler", "threads"});
        SimulationConfig& o = c.simulation;
        if (s.contains("n") && s.at("n").is_number()) o.n = {s.at("n").get<std::size_t>()};
        else read(s, "n", o.n, w);
        read(s, "runs", o.runs, w);
        read(s, "bins", o.bins, w);
        read(s, "base_seed", o.base_seed, w);
        read(s, "sampler", o.sampler, w);
        read(s, "threads", o.threads, w);
    }
    if (c.simulation.n.empty()) throw ConfigError("config.simulation.n must not be empty");
    for (std::size_t n : c.simulation.n)
        if (n < 2) throw ConfigError("config.simulation.n: need at least two vertices");
    if (c.simulation.runs == 0) throw ConfigError("config.simulation.runs must be at least 1");
    if (c.simulation.bins == 0) throw ConfigError("config.simulation.bins must be at least 1");
    if (c.simulation.sampler != "dense" && c.simulation.sampler != "skip")
        throw ConfigError("config.simulation.sampler must be dense or skip");

    if (doc.contains("sandwich")) {
        const auto& s = doc.at("sandwich");
        detail::check_keys(s, "config.sandwich", {"levels"});
        read(s, "levels", c.sandwich.levels, "config.sandwich");
    }
    for (std::size_t i = 0; i < c.sandwich.levels.size(); ++i) {
        if (c.sandwich.levels[i] == 0) throw ConfigError("config.sandwich.levels must be positive");
        if (i > 0 && c.sandwich.levels[i] <= c.sandwich.levels[i - 1])
            throw ConfigError("config.sandwich.levels must be ascending");
    }

    if (doc.contains("finite")) {
        const auto& s = doc.at("finite");
        const std::string w = "config.finite";
        detail::check_keys(s, w, {"level", "side", "kernel", "masses"});
        read(s, "level", c.finite.level, w);
        read(s, "side", c.finite.side, w);
        read(s, "kernel", c.finite.kernel, w);
        read(s, "masses", c.finite.masses, w);
    }
    if (c.finite.side != "lower" && c.finite.side != "upper")
        throw ConfigError("config.finite.side must be lower or upper");
    if (c.finite.explicit_system() != !c.finite.masses.empty())
        throw ConfigError("config.finite: kernel and masses must be given together");
    if (c.finite.level == 0) throw ConfigError("config.finite.level must be positive");

    if (doc.contains("resilience")) {
        const auto& s = doc.at("resilience");
        detail::check_keys(s, "config.resilience", {"band", "power_steps"});
        read(s, "band", c.resilience.band, "config.resilience");
        read(s, "power_steps", c.resilience.power_steps, "config.resilience");
    }
    if (!(c.resilience.band >= 0.0)) throw ConfigError("config.resilience.band must be non-negative");

    if (!c.threshold_table.empty() && !std::filesystem::exists(c.base_dir / c.threshold_table))
        throw ConfigError("config.threshold_table: file not found: " + c.threshold_table);
    if (c.kernel.rfind("table:", 0) == 0 && !std::filesystem::exists(c.base_dir / c.kernel.substr(6)))
        throw ConfigError("config.kernel: table file not found: " + c.kernel.substr(6));
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

/// The fully resolved configuration, defaults included.
inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json thresholds = nlohmann::json::object();
    for (const auto& [k, p] : c.thresholds) thresholds[std::to_string(k)] = p;
    const SolverConfig& s = c.solver;
    const SimulationConfig& m = c.simulation;
    auto resolved = [&](const std::string& p) {
        return p.empty() ? p : std::filesystem::absolute(c.base_dir / p).lexically_normal().string();
    };
    std::string kernel = c.kernel;
    if (kernel.rfind("table:", 0) == 0) kernel = "table:" + resolved(kernel.substr(6));
    nlohmann::json doc = {
        {"schema", "kbp.config/1"},
        {"kernel", kernel},
        {"thresholds", thresholds},
        {"threshold_table", resolved(c.threshold_table)},
        {"max_threshold", c.max_threshold},
        {"grid_cells", c.grid_cells},
        {"solver",
         {{"tolerance", s.tolerance}, {"max_iterations", s.max_iterations}, {"nn", s.nn}, {"gamma", s.gamma},
          {"hidden", s.hidden}, {"optimizer", s.optimizer}, {"learning_rate", s.learning_rate},
          {"hold_steps", s.hold_steps}, {"decay", s.decay}, {"decay_every", s.decay_every},
          {"learning_rate_floor", s.learning_rate_floor}, {"momentum", s.momentum},
          {"stop_epsilon", s.stop_epsilon}, {"max_steps", s.max_steps}, {"sample_count", s.sample_count},
          {"seed", s.seed}, {"initial_level", s.initial_level}, {"trace", s.trace}}},
        {"simulation",
         {{"n", m.n}, {"runs", m.runs}, {"bins", m.bins}, {"base_seed", m.base_seed}, {"sampler", m.sampler},
          {"threads", m.threads}}},
        {"sandwich", {{"levels", c.sandwich.levels}}},
        {"finite",
         {{"level", c.finite.level}, {"side", c.finite.side}, {"kernel", c.finite.kernel},
          {"masses", c.finite.masses}}},
        {"resilience", {{"band", c.resilience.band}, {"power_steps", c.resilience.power_steps}}},
        {"output", c.output},
    };
    return doc;
}

/// Builds the kernel named in the configuration: "case_study",
/// "constant:c", "product:a0,a1,..." (phi is the polynomial with these
/// coefficients) or "table:<csv path>".
inline KernelModel build_kernel(const ExperimentConfig& c, const TypeGrid& grid) {
    const std::string& spec = c.kernel;
    try {
        if (spec == "case_study") return make_case_study_kernel();
        if (spec.rfind("constant:", 0) == 0) {
            const auto v = detail::parse_number_list(spec.substr(9), "config.kernel");
            if (v.size() != 1) throw ConfigError("config.kernel: constant takes one value");
            KernelModel k = make_constant_kernel(v[0]);
            k.name = spec;
            return k;
        }
        if (spec.rfind("product:", 0) == 0) {
            const auto coeffs = detail::parse_number_list(spec.substr(8), "config.kernel");
            auto phi = [coeffs](double x) {
                double acc = 0.0;
                for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
                return acc;
            };
            return make_product_kernel(phi, grid, spec);
        }
        if (spec.rfind("table:", 0) == 0) return make_table_kernel(detail::read_csv_matrix(c.base_dir / spec.substr(6)), spec);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("config.kernel: ") + e.what());
    }
    throw ConfigError("config.kernel: unknown kernel '" + spec + "'");
}

inline ThresholdMeasure build_measure(const ExperimentConfig& c, const TypeGrid& grid) {
    try {
        if (!c.threshold_table.empty()) {
            const auto rows = detail::read_csv_matrix(c.base_dir / c.threshold_table);
            if (rows.size() != grid.cell_count())
                throw ConfigError("config.threshold_table: expected one row per grid cell");
            const std::size_t width = rows.front().size();
            std::vector<ThresholdEntry> entries;
            for (std::size_t k = 0; k < width; ++k) {
                GridFunction d(grid.cell_count());
                for (std::size_t cell = 0; cell < rows.size(); ++cell) {
                    if (rows[cell].size() != width) throw ConfigError("config.threshold_table: ragged rows");
                    d[cell] = rows[cell][k];
                }
                entries.push_back({k, std::move(d)});
            }
            return make_threshold_measure(grid, entries, c.max_threshold);
        }
        return make_constant_measure(grid, c.thresholds, c.max_threshold);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("config.thresholds: ") + e.what());
    }
}

inline PicardOptions picard_options(const ExperimentConfig& c) {
    PicardOptions o;
    o.tolerance = c.solver.tolerance;
    o.max_iterations = c.solver.max_iterations;
    return o;
}

inline NeuralOptions neural_options(const ExperimentConfig& c) {
    const SolverConfig& s = c.solver;
    NeuralOptions o;
    o.schedule = {s.learning_rate, s.hold_steps, s.decay, s.decay_every, s.learning_rate_floor};
    o.optimizer = s.optimizer == "adam"       ? Optimizer::adam
                  : s.optimizer == "momentum" ? Optimizer::momentum
                                              : Optimizer::gradient_descent;
    o.momentum = s.momentum;
    o.stop_epsilon = s.stop_epsilon;
    o.max_steps = s.max_steps;
    o.sample_count = s.sample_count;
    o.seed = s.seed;
    o.initial_level = s.initial_level;
    return o;
}

inline std::vector<std::size_t> layer_sizes(const SolverConfig& s) {
    std::vector<std::size_t> sizes{1};
    sizes.insert(sizes.end(), s.hidden.begin(), s.hidden.end());
    sizes.push_back(1);
    return sizes;
}

inline SampleOptions sample_options(const ExperimentConfig& c) {
    SampleOptions o;
    o.sampler = c.simulation.sampler == "skip" ? EdgeSampler::skip : EdgeSampler::dense;
    return o;
}

/// Finite-type system described by the configuration.
inline FiniteTypeSystem build_finite_system(const ExperimentConfig& c, const KernelModel& kernel, const TypeGrid& grid,
                                            const ThresholdMeasure& measure) {
    try {
        if (c.finite.explicit_system()) {
            const std::size_t n = c.finite.kernel.size();
            std::vector<double> flat;
            for (const auto& row : c.finite.kernel) {
                if (row.size() != n) throw ConfigError("config.finite.kernel must be square");
                flat.insert(flat.end(), row.begin(), row.end());
            }
            return make_finite_type_system(std::move(flat), c.finite.masses);
        }
        auto [upper, lower] = make_step_kernels(kernel, grid, c.finite.level);
        return finite_system_from_step_kernel(c.finite.side == "upper" ? upper : lower, grid, measure);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("config.finite: ") + e.what());
    }
}

}  // namespace kbp
