#pragma once

// CSV and JSON artifacts. Every CSV starts with a "# schema: <name>/<version>"
// comment line and every JSON document carries a "schema" field.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kbp/finite_type.hpp"
#include "kbp/fixed_point.hpp"
#include "kbp/model.hpp"
#include "kbp/resilience.hpp"
#include "kbp/simulator.hpp"

namespace kbp::io {

inline constexpr int schema_version = 1;

inline std::string schema(const std::string& name) { return "kbp." + name + "/" + std::to_string(schema_version); }

class OutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path);
    if (!out) throw OutputError("cannot write " + path.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    auto out = open_output(path);
    out << doc.dump(2) << '\n';
}

/// NaN and infinities are not valid JSON numbers; they become null.
inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

/// Linear interpolation of a grid function between cell midpoints, constant
/// beyond the outermost midpoints.
inline double interpolate(const TypeGrid& grid, const GridFunction& f, double x) {
    auto mids = grid.midpoints();
    if (x <= mids.front()) return f[0];
    if (x >= mids.back()) return f[f.size() - 1];
    const auto it = std::upper_bound(mids.begin(), mids.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - mids.begin());
    const std::size_t lo = hi - 1;
    const double t = (x - mids[lo]) / (mids[hi] - mids[lo]);
    return (1.0 - t) * f[lo] + t * f[hi];
}

inline void write_fhat_csv(const std::filesystem::path& path, const TypeGrid& grid, const GridFunction& f) {
    auto out = open_output(path);
    out << "# schema: " << schema("fhat") << '\n' << "midpoint,value\n";
    auto mids = grid.midpoints();
    for (std::size_t c = 0; c < f.size(); ++c) out << mids[c] << ',' << f[c] << '\n';
}

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
    auto out = open_output(path);
    out << "# schema: " << schema("trace") << '\n' << "iteration,residual,integral\n";
    for (const auto& r : trace) out << r.iteration << ',' << r.residual << ',' << r.integral << '\n';
}

inline nlohmann::json to_json(const DerivativeCondition& d) {
    return {{"status", to_string(d.status)}, {"margin", number(d.margin)}, {"spectral_radius", number(d.spectral_radius)}};
}

inline nlohmann::json fixed_point_json(const FixedPointResult& r, const std::string& solver, double tail_mass) {
    return {{"schema", schema("fixedpoint")},
            {"solver", solver},
            {"integral", number(r.integral)},
            {"residual", number(r.residual)},
            {"iterations", r.iterations},
            {"tail_mass", number(tail_mass)},
            {"derivative_condition", to_json(r.derivative_condition)}};
}

inline void write_runs_csv(const std::filesystem::path& path, const std::vector<MonteCarloSummary>& summaries) {
    auto out = open_output(path);
    out << "# schema: " << schema("runs") << '\n' << "seed,n,final_fraction,rounds\n";
    for (const auto& s : summaries)
        for (const auto& r : s.rows) out << r.seed << ',' << r.n << ',' << r.final_fraction << ',' << r.rounds << '\n';
}

inline void write_bins_csv(const std::filesystem::path& path, const MonteCarloSummary& summary, const TypeGrid& grid,
                           const GridFunction& f_hat) {
    auto out = open_output(path);
    out << "# schema: " << schema("bins") << '\n' << "bin_left,bin_right,mean_infected_fraction,fhat_value\n";
    const std::size_t bins = summary.per_bin_mean.size();
    for (std::size_t b = 0; b < bins; ++b) {
        const double left = static_cast<double>(b) / static_cast<double>(bins);
        const double right = static_cast<double>(b + 1) / static_cast<double>(bins);
        out << left << ',' << right << ',';
        if (std::isnan(summary.per_bin_mean[b])) out << "nan";
        else out << summary.per_bin_mean[b];
        out << ',' << interpolate(grid, f_hat, 0.5 * (left + right)) << '\n';
    }
}

inline nlohmann::json summary_json(const std::vector<MonteCarloSummary>& summaries, double fhat_integral) {
    nlohmann::json results = nlohmann::json::array();
    for (const auto& s : summaries)
        results.push_back({{"n", s.n},
                           {"runs", s.runs},
                           {"mean", number(s.mean)},
                           {"std", number(s.std_dev)},
                           {"min", number(s.min)},
                           {"max", number(s.max)}});
    return {{"schema", schema("summary")}, {"fhat_integral", number(fhat_integral)}, {"results", results}};
}

inline void write_sandwich_csv(const std::filesystem::path& path, const std::vector<SandwichLevel>& levels) {
    auto out = open_output(path);
    out << "# schema: " << schema("sandwich") << '\n' << "level,lower_integral,upper_integral,width\n";
    for (const auto& l : levels)
        out << l.level << ',' << l.lower_integral << ',' << l.upper_integral << ',' << l.width() << '\n';
}

inline nlohmann::json sandwich_json(const std::vector<SandwichLevel>& levels, double base_integral) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& l : levels)
        rows.push_back({{"level", l.level},
                        {"lower_integral", number(l.lower_integral)},
                        {"upper_integral", number(l.upper_integral)},
                        {"width", number(l.width())}});
    return {{"schema", schema("sandwich")}, {"base_integral", number(base_integral)}, {"levels", rows}};
}

inline nlohmann::json finite_json(const FiniteTypeSystem& sys, const FirstJointZero& zero, double margin) {
    return {{"schema", schema("finite")},
            {"type_count", sys.type_count},
            {"max_threshold", sys.max_threshold},
            {"z_hat", zero.z_hat},
            {"tau_hat", number(zero.tau_hat)},
            {"iterations", zero.iterations},
            {"derivative_margin", number(margin)},
            {"direction", "uniform"}};
}

inline nlohmann::json resilience_json(const ResilienceVerdict& v, std::size_t grid_size, const std::string& kernel_name) {
    return {{"schema", schema("resilience")},
            {"spectral_radius", number(v.spectral_radius)},
            {"verdict", to_string(v.verdict)},
            {"margin", number(v.margin)},
            {"grid_size", grid_size},
            {"kernel_name", kernel_name},
            {"grows_pointwise", v.grows_pointwise},
            {"shrinks_pointwise", v.shrinks_pointwise}};
}

}  // namespace kbp::io
