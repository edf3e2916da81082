#pragma once

// Type space, measures, kernels and grid functions shared by every other
// module. The type space is [0,1] discretized into cells; all integrals are
// midpoint Riemann sums against the per-cell weights.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kbp/errors.hpp"

namespace kbp {

/// Values of a function on the type space, one per grid cell.
class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(std::size_t size, double fill = 0.0) : values_(size, fill) {}
    explicit GridFunction(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    const std::vector<double>& vector() const noexcept { return values_; }

    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    /// True when every value lies in [0,1] (membership in F_1).
    bool in_unit_interval() const noexcept {
        return std::all_of(values_.begin(), values_.end(),
                           [](double v) { return v >= 0.0 && v <= 1.0; });
    }

    /// True when every value is finite and non-negative (membership in F_b).
    bool nonnegative_finite() const noexcept {
        return std::all_of(values_.begin(), values_.end(),
                           [](double v) { return std::isfinite(v) && v >= 0.0; });
    }

    double sup_norm() const noexcept {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    friend bool operator==(const GridFunction&, const GridFunction&) = default;

private:
    std::vector<double> values_;
};

inline double sup_distance(const GridFunction& a, const GridFunction& b) {
    detail::require(a.size() == b.size(), "sup_distance: dimension mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Discretization of S = [0,1] into contiguous cells carrying mu-mass.
class TypeGrid {
public:
    TypeGrid(std::vector<double> edges, std::vector<double> weights)
        : edges_(std::move(edges)), weights_(std::move(weights)) {
        detail::require(edges_.size() >= 2, "TypeGrid: need at least one cell");
        detail::require(weights_.size() + 1 == edges_.size(),
                        "TypeGrid: weights must have one entry per cell");
        detail::require(edges_.front() == 0.0 && edges_.back() == 1.0,
                        "TypeGrid: edges must span [0,1]");
        for (std::size_t i = 1; i < edges_.size(); ++i)
            detail::require(edges_[i] > edges_[i - 1], "TypeGrid: edges must be strictly increasing");
        double total = 0.0;
        for (double w : weights_) {
            detail::require(std::isfinite(w) && w >= 0.0, "TypeGrid: weights must be non-negative");
            total += w;
        }
        detail::require(total > 0.0, "TypeGrid: total weight must be positive");
        for (double& w : weights_) w /= total;
        midpoints_.resize(weights_.size());
        for (std::size_t i = 0; i < weights_.size(); ++i)
            midpoints_[i] = 0.5 * (edges_[i] + edges_[i + 1]);
    }

    std::size_t cell_count() const noexcept { return weights_.size(); }
    std::span<const double> cell_edges() const noexcept { return edges_; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::span<const double> midpoints() const noexcept { return midpoints_; }

    /// Index of the cell containing x; x = 1 belongs to the last cell.
    std::size_t cell_of(double x) const noexcept {
        auto it = std::upper_bound(edges_.begin() + 1, edges_.end() - 1, x);
        return static_cast<std::size_t>(it - (edges_.begin() + 1));
    }

    /// Midpoint-rule integral of f against mu.
    double integrate(const GridFunction& f) const {
        detail::require(f.size() == cell_count(), "integrate: dimension mismatch");
        double s = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * weights_[i];
        return s;
    }

    /// Tabulates a callable at the cell midpoints.
    template <class F>
    GridFunction tabulate(F&& fn) const {
        GridFunction out(cell_count());
        for (std::size_t i = 0; i < cell_count(); ++i) out[i] = fn(midpoints_[i]);
        return out;
    }

private:
    std::vector<double> edges_;
    std::vector<double> weights_;
    std::vector<double> midpoints_;
};

inline TypeGrid build_uniform_grid(std::size_t cell_count) {
    detail::require(cell_count >= 1, "build_uniform_grid: cell_count must be positive");
    std::vector<double> edges(cell_count + 1);
    for (std::size_t i = 0; i <= cell_count; ++i)
        edges[i] = static_cast<double>(i) / static_cast<double>(cell_count);
    edges.back() = 1.0;
    return TypeGrid(std::move(edges), std::vector<double>(cell_count, 1.0 / static_cast<double>(cell_count)));
}

/// A bounded, non-negative connection kernel kappa(x, y). The first argument
/// is the type of the edge source, the second the type of the receiver.
struct KernelModel {
    std::function<double(double, double)> evaluator;
    double bound = 0.0;
    std::string name;

    double operator()(double x, double y) const { return evaluator(x, y); }
};

/// Largest kernel value over all pairs of grid midpoints.
inline double max_over_midpoints(const KernelModel& kernel, const TypeGrid& grid) {
    double m = 0.0;
    for (double x : grid.midpoints())
        for (double y : grid.midpoints()) m = std::max(m, kernel(x, y));
    return m;
}

/// Replaces the kernel bound by the midpoint maximum with a 1e-6 safety factor.
inline KernelModel with_computed_bound(KernelModel kernel, const TypeGrid& grid) {
    kernel.bound = max_over_midpoints(kernel, grid) * (1.0 + 1e-6);
    return kernel;
}

inline KernelModel make_case_study_kernel() {
    return KernelModel{
        [](double x, double y) {
            return 10.0 * std::sqrt(x * x + y * y) / (1.0 + std::sqrt(std::abs(x - y)));
        },
        10.0 * std::sqrt(2.0), "case_study"};
}

inline KernelModel make_constant_kernel(double c) {
    detail::require(std::isfinite(c) && c >= 0.0, "constant kernel: value must be non-negative");
    return KernelModel{[c](double, double) { return c; }, c, "constant:" + std::to_string(c)};
}

/// Rank-one kernel phi(x) phi(y). The bound is computed on the given grid.
inline KernelModel make_product_kernel(std::function<double(double)> phi, const TypeGrid& grid,
                                       std::string name = "product") {
    KernelModel k{[phi](double x, double y) { return phi(x) * phi(y); }, 0.0, std::move(name)};
    for (double x : grid.midpoints())
        detail::require(phi(x) >= 0.0, "product kernel: phi must be non-negative");
    return with_computed_bound(std::move(k), grid);
}

/// Kernel given by a square table of values at the midpoints of a uniform
/// grid; evaluated piecewise constant on the table's cells.
inline KernelModel make_table_kernel(std::vector<std::vector<double>> table, std::string name = "table") {
    const std::size_t m = table.size();
    detail::require(m >= 1, "table kernel: empty table");
    double bound = 0.0;
    for (const auto& row : table) {
        detail::require(row.size() == m, "table kernel: table must be square");
        for (double v : row) {
            detail::require(std::isfinite(v) && v >= 0.0, "table kernel: entries must be non-negative");
            bound = std::max(bound, v);
        }
    }
    auto index = [m](double x) {
        auto i = static_cast<std::size_t>(std::floor(x * static_cast<double>(m)));
        return std::min(i, m - 1);
    };
    return KernelModel{[table = std::move(table), index](double x, double y) { return table[index(x)][index(y)]; },
                       bound * (1.0 + 1e-6), std::move(name)};
}

/// Contiguous grouping of grid cells into blocks; block l covers cells
/// [ranges[l].first, ranges[l].second).
struct BlockPartition {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;

    std::size_t block_count() const noexcept { return ranges.size(); }

    std::vector<std::size_t> block_of_cells(std::size_t cell_count) const {
        std::vector<std::size_t> out(cell_count);
        for (std::size_t l = 0; l < ranges.size(); ++l)
            for (std::size_t c = ranges[l].first; c < ranges[l].second; ++c) out[c] = l;
        return out;
    }

    /// mu-mass of each block.
    std::vector<double> masses(const TypeGrid& grid) const {
        std::vector<double> out(ranges.size(), 0.0);
        for (std::size_t l = 0; l < ranges.size(); ++l)
            for (std::size_t c = ranges[l].first; c < ranges[l].second; ++c) out[l] += grid.weights()[c];
        return out;
    }

    /// True when every block of this partition lies inside one block of coarser.
    bool refines(const BlockPartition& coarser) const {
        std::size_t j = 0;
        for (const auto& [b, e] : ranges) {
            while (j < coarser.ranges.size() && coarser.ranges[j].second <= b) ++j;
            if (j == coarser.ranges.size()) return false;
            if (b < coarser.ranges[j].first || e > coarser.ranges[j].second) return false;
        }
        return true;
    }
};

/// Splits the grid into `level` blocks of equal cell count (interval bisection
/// on [0,1] when level is a power of two).
inline BlockPartition make_partition(const TypeGrid& grid, std::size_t level) {
    detail::require(level >= 1, "make_partition: level must be positive");
    detail::require(grid.cell_count() % level == 0, "make_partition: level must divide the cell count");
    const std::size_t width = grid.cell_count() / level;
    BlockPartition p;
    p.ranges.reserve(level);
    for (std::size_t l = 0; l < level; ++l) p.ranges.emplace_back(l * width, (l + 1) * width);
    return p;
}

enum class StepSide { upper, lower };

/// Blockwise sup (upper) or inf (lower) of a kernel over a partition.
struct StepKernel {
    std::size_t level = 0;
    std::vector<double> block_values;  // level x level, row = source block
    BlockPartition partition;
    std::vector<double> block_edges;   // level + 1 type-space boundaries
    StepSide side = StepSide::upper;

    double block_value(std::size_t source, std::size_t target) const {
        return block_values[source * level + target];
    }

    std::size_t block_of(double x) const noexcept {
        auto it = std::upper_bound(block_edges.begin() + 1, block_edges.end() - 1, x);
        return static_cast<std::size_t>(it - (block_edges.begin() + 1));
    }

    KernelModel as_kernel() const {
        double bound = *std::max_element(block_values.begin(), block_values.end());
        return KernelModel{[self = *this](double x, double y) { return self.block_value(self.block_of(x), self.block_of(y)); },
                           bound, side == StepSide::upper ? "step_upper" : "step_lower"};
    }
};

/// Builds the step kernel from explicit block values over a partition of grid.
inline StepKernel make_step_kernel(const TypeGrid& grid, BlockPartition partition, std::vector<double> block_values,
                                   StepSide side = StepSide::upper) {
    const std::size_t level = partition.block_count();
    detail::require(block_values.size() == level * level, "make_step_kernel: need level^2 block values");
    for (double v : block_values)
        detail::require(std::isfinite(v) && v >= 0.0, "make_step_kernel: block values must be non-negative");
    StepKernel k;
    k.level = level;
    k.block_values = std::move(block_values);
    k.block_edges.reserve(level + 1);
    for (const auto& r : partition.ranges) k.block_edges.push_back(grid.cell_edges()[r.first]);
    k.block_edges.push_back(1.0);
    k.partition = std::move(partition);
    k.side = side;
    return k;
}

/// Upper and lower step kernels at the given level, using extremes over grid
/// midpoints in each block pair.
inline std::pair<StepKernel, StepKernel> make_step_kernels(const KernelModel& kernel, const TypeGrid& grid,
                                                           std::size_t level) {
    BlockPartition partition = make_partition(grid, level);
    auto mids = grid.midpoints();
    std::vector<double> hi(level * level, 0.0);
    std::vector<double> lo(level * level, std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < level; ++a) {
        for (std::size_t b = 0; b < level; ++b) {
            double& up = hi[a * level + b];
            double& dn = lo[a * level + b];
            for (std::size_t i = partition.ranges[a].first; i < partition.ranges[a].second; ++i) {
                for (std::size_t j = partition.ranges[b].first; j < partition.ranges[b].second; ++j) {
                    const double v = kernel(mids[i], mids[j]);
                    up = std::max(up, v);
                    dn = std::min(dn, v);
                }
            }
        }
    }
    return {make_step_kernel(grid, partition, std::move(hi), StepSide::upper),
            make_step_kernel(grid, partition, std::move(lo), StepSide::lower)};
}

/// Per-threshold densities eta_k against mu, k = 0..max_threshold.
struct ThresholdMeasure {
    std::size_t max_threshold = 0;
    std::vector<GridFunction> densities;
    double tail_mass = 0.0;

    const GridFunction& eta(std::size_t k) const { return densities.at(k); }
    std::size_t cell_count() const noexcept { return densities.empty() ? 0 : densities.front().size(); }

    /// eta_k at cell c, zero for k beyond the truncation.
    double density(std::size_t k, std::size_t c) const {
        return k <= max_threshold ? densities[k][c] : 0.0;
    }
};

struct ThresholdEntry {
    std::size_t threshold = 0;
    GridFunction density;
};

inline constexpr std::size_t default_max_threshold = 64;

/// Normalizes the given densities so that they sum to one in every cell.
/// Entries above max_threshold are dropped; their share of the mass is
/// recorded in tail_mass (plus any mass the caller already truncated).
inline ThresholdMeasure make_threshold_measure(const TypeGrid& grid, const std::vector<ThresholdEntry>& entries,
                                               std::size_t max_threshold = default_max_threshold,
                                               double truncated_mass = 0.0) {
    detail::require(!entries.empty(), "make_threshold_measure: no densities given");
    detail::require(truncated_mass >= 0.0, "make_threshold_measure: truncated mass must be non-negative");
    const std::size_t cells = grid.cell_count();
    std::size_t kmax = 0;
    for (const auto& e : entries) {
        detail::require(e.density.size() == cells, "make_threshold_measure: density size mismatch");
        for (double v : e.density)
            detail::require(std::isfinite(v) && v >= 0.0, "make_threshold_measure: negative density");
        if (e.threshold <= max_threshold) kmax = std::max(kmax, e.threshold);
    }

    ThresholdMeasure m;
    m.max_threshold = kmax;
    m.densities.assign(kmax + 1, GridFunction(cells));
    GridFunction total(cells), dropped(cells);
    for (const auto& e : entries) {
        for (std::size_t c = 0; c < cells; ++c) {
            total[c] += e.density[c];
            if (e.threshold <= kmax)
                m.densities[e.threshold][c] += e.density[c];
            else
                dropped[c] += e.density[c];
        }
    }
    for (std::size_t c = 0; c < cells; ++c) {
        detail::require(total[c] > 0.0, "make_threshold_measure: all densities vanish in a cell");
        const double kept = total[c] - dropped[c];
        detail::require(kept > 0.0, "make_threshold_measure: only truncated thresholds in a cell");
        for (auto& d : m.densities) d[c] /= kept;
        dropped[c] /= total[c];
    }
    m.tail_mass = truncated_mass + grid.integrate(dropped);
    return m;
}

/// Type-independent measure: each (threshold, probability) pair gives a
/// constant density.
inline ThresholdMeasure make_constant_measure(const TypeGrid& grid,
                                              const std::vector<std::pair<std::size_t, double>>& shares,
                                              std::size_t max_threshold = default_max_threshold) {
    std::vector<ThresholdEntry> entries;
    entries.reserve(shares.size());
    for (const auto& [k, p] : shares) entries.push_back({k, GridFunction(grid.cell_count(), p)});
    return make_threshold_measure(grid, entries, max_threshold);
}

/// 10% seeds, all other vertices at threshold 2.
inline ThresholdMeasure make_case_study_measure(const TypeGrid& grid) {
    return make_constant_measure(grid, {{0, 0.1}, {2, 0.9}});
}

}  // namespace kbp
