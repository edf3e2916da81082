#pragma once

// Finite random graphs G(n, V) and the exact bootstrap percolation process
// on them. A directed edge i -> j is present with probability
// min{1, kappa(s_i, s_j) / n}; vertex j becomes infected once at least k_j of
// its in-neighbours are infected.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "kbp/errors.hpp"
#include "kbp/model.hpp"
#include "kbp/rng.hpp"

namespace kbp {

/// Directed graph with per-vertex type and threshold, successors in CSR form.
struct PercolationGraph {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::vector<double> types;
    std::vector<std::uint32_t> thresholds;
    std::vector<std::size_t> offsets;       // n + 1
    std::vector<std::uint32_t> successors;  // targets of out-edges

    std::span<const std::uint32_t> out_edges(std::size_t i) const {
        return {successors.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }
    std::size_t edge_count() const noexcept { return successors.size(); }
};

enum class EdgeSampler {
    dense,  // one Bernoulli trial per ordered pair
    skip,   // geometric skipping at an envelope rate, then thinning
};

struct SampleOptions {
    EdgeSampler sampler = EdgeSampler::dense;
    /// Envelope kernel value for the skip sampler; 0 means the kernel bound.
    /// Graphs sampled with the same seed and envelope are coupled edge by edge.
    double envelope = 0.0;
};

namespace detail {

inline std::vector<double> cumulative(std::span<const double> w) {
    std::vector<double> cdf(w.size());
    std::partial_sum(w.begin(), w.end(), cdf.begin());
    cdf.back() = 1.0;
    return cdf;
}

inline std::size_t pick(const std::vector<double>& cdf, double u) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

}  // namespace detail

/// Draws types i.i.d. from mu (cell by weight, then uniform inside the cell),
/// thresholds from eta_.(cell), and edges independently. Deterministic given
/// the seed; types and thresholds do not depend on the kernel.
inline PercolationGraph sample_graph(const KernelModel& kernel, const ThresholdMeasure& measure, const TypeGrid& grid,
                                     std::size_t n, std::uint64_t seed, const SampleOptions& options = {}) {
    detail::require(n >= 2, "sample_graph: need at least two vertices");
    detail::require(n < (std::size_t{1} << 31), "sample_graph: too many vertices");
    detail::require(measure.cell_count() == grid.cell_count(), "sample_graph: measure and grid sizes differ");

    PercolationGraph g;
    g.n = n;
    g.seed = seed;
    g.types.resize(n);
    g.thresholds.resize(n);

    const CounterRng type_rng(seed, Stream::types);
    const CounterRng threshold_rng(seed, Stream::thresholds);
    const std::vector<double> cell_cdf = detail::cumulative(grid.weights());
    auto edges = grid.cell_edges();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = detail::pick(cell_cdf, type_rng.uniform(2 * i));
        g.types[i] = edges[c] + type_rng.uniform(2 * i + 1) * (edges[c + 1] - edges[c]);
        const double u = threshold_rng.uniform(i);
        double acc = 0.0;
        std::size_t k = 0;
        for (; k < measure.max_threshold; ++k) {
            acc += measure.densities[k][c];
            if (u < acc) break;
        }
        g.thresholds[i] = static_cast<std::uint32_t>(k);
    }

    const CounterRng edge_rng(seed, Stream::edges);
    const double nd = static_cast<double>(n);
    g.offsets.assign(n + 1, 0);
    if (options.sampler == EdgeSampler::dense) {
        for (std::size_t i = 0; i < n; ++i) {
            const double si = g.types[i];
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double p = std::min(1.0, kernel(si, g.types[j]) / nd);
                if (edge_rng.uniform(static_cast<std::uint64_t>(i) * n + j) < p)
                    g.successors.push_back(static_cast<std::uint32_t>(j));
            }
            g.offsets[i + 1] = g.successors.size();
        }
        return g;
    }

    const double envelope = options.envelope > 0.0 ? options.envelope : kernel.bound;
    detail::require(envelope >= kernel.bound, "sample_graph: envelope below the kernel bound");
    const double q = std::min(1.0, envelope / nd);
    const double log_miss = q < 1.0 ? std::log1p(-q) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double si = g.types[i];
        const std::uint64_t row = static_cast<std::uint64_t>(i) << 32;
        std::uint64_t draw = 0;
        std::int64_t j = -1;
        while (q > 0.0) {
            const double skip = q < 1.0 ? std::floor(std::log(edge_rng.open_uniform(row | draw)) / log_miss) : 0.0;
            ++draw;
            if (skip >= nd) break;
            j += 1 + static_cast<std::int64_t>(skip);
            if (j >= static_cast<std::int64_t>(n)) break;
            const double accept = edge_rng.uniform(row | draw);
            ++draw;
            if (static_cast<std::size_t>(j) == i) continue;
            const double p = std::min(1.0, kernel(si, g.types[static_cast<std::size_t>(j)]) / nd);
            if (accept * q < p) g.successors.push_back(static_cast<std::uint32_t>(j));
        }
        g.offsets[i + 1] = g.successors.size();
    }
    return g;
}

struct SimulationRecord {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::size_t final_infected = 0;
    std::size_t initial_infected = 0;
    std::size_t rounds = 0;
    std::vector<std::size_t> per_bin_counts;
    std::vector<std::size_t> per_bin_totals;
    std::vector<std::uint8_t> infected;

    double final_fraction() const noexcept { return static_cast<double>(final_infected) / static_cast<double>(n); }
};

inline std::size_t type_bin(double s, std::size_t bins) {
    return std::min(bins - 1, static_cast<std::size_t>(s * static_cast<double>(bins)));
}

/// Event-driven cascade: seeds start the frontier; each popped vertex
/// decrements the remaining threshold of its successors, and a successor whose
/// remaining threshold reaches zero joins the frontier. Processing the frontier
/// in FIFO order assigns each vertex the generation in which it is infected.
inline SimulationRecord run_percolation(const PercolationGraph& g, std::size_t bins = 1000) {
    detail::require(bins >= 1, "run_percolation: need at least one bin");
    SimulationRecord rec;
    rec.seed = g.seed;
    rec.n = g.n;
    rec.infected.assign(g.n, 0);
    std::vector<std::uint32_t> remaining(g.thresholds);
    std::vector<std::uint32_t> generation(g.n, 0);
    std::deque<std::uint32_t> frontier;
    for (std::size_t i = 0; i < g.n; ++i) {
        if (remaining[i] == 0) {
            rec.infected[i] = 1;
            frontier.push_back(static_cast<std::uint32_t>(i));
        }
    }
    rec.initial_infected = frontier.size();
    while (!frontier.empty()) {
        const std::uint32_t u = frontier.front();
        frontier.pop_front();
        for (std::uint32_t v : g.out_edges(u)) {
            if (rec.infected[v]) continue;
            if (--remaining[v] == 0) {
                rec.infected[v] = 1;
                generation[v] = generation[u] + 1;
                rec.rounds = std::max<std::size_t>(rec.rounds, generation[v]);
                frontier.push_back(v);
            }
        }
    }
    rec.per_bin_counts.assign(bins, 0);
    rec.per_bin_totals.assign(bins, 0);
    for (std::size_t i = 0; i < g.n; ++i) {
        const std::size_t b = type_bin(g.types[i], bins);
        ++rec.per_bin_totals[b];
        if (rec.infected[i]) {
            ++rec.per_bin_counts[b];
            ++rec.final_infected;
        }
    }
    return rec;
}

struct SimulationSetup {
    KernelModel kernel;
    ThresholdMeasure measure;
    TypeGrid grid;
    SampleOptions sampling;
};

struct RunRow {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    double final_fraction = 0.0;
    std::size_t rounds = 0;
};

struct MonteCarloSummary {
    std::size_t n = 0;
    std::size_t runs = 0;
    double mean = 0.0;
    double std_dev = 0.0;  // sample standard deviation
    double min = 0.0;
    double max = 0.0;
    std::vector<double> per_bin_mean;  // NaN where no run had a vertex in the bin
    std::vector<RunRow> rows;
};

/// Runs independent replicas with seeds base_seed + r and aggregates them.
inline MonteCarloSummary monte_carlo(const SimulationSetup& setup, std::size_t n, std::size_t runs,
                                     std::uint64_t base_seed, std::size_t bins = 1000, unsigned threads = 1) {
    detail::require(runs >= 1, "monte_carlo: need at least one run");
    detail::require(bins >= 1, "monte_carlo: need at least one bin");
    std::vector<SimulationRecord> records(runs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r = next++; r < runs; r = next++) {
            const PercolationGraph g =
                sample_graph(setup.kernel, setup.measure, setup.grid, n, base_seed + r, setup.sampling);
            records[r] = run_percolation(g, bins);
            records[r].infected.clear();
            records[r].infected.shrink_to_fit();
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(runs)));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    }

    MonteCarloSummary s;
    s.n = n;
    s.runs = runs;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    std::vector<double> bin_sum(bins, 0.0);
    std::vector<std::size_t> bin_hits(bins, 0);
    for (const auto& rec : records) {
        const double x = rec.final_fraction();
        s.rows.push_back({rec.seed, n, x, rec.rounds});
        s.mean += x;
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
        for (std::size_t b = 0; b < bins; ++b) {
            if (rec.per_bin_totals[b] == 0) continue;
            bin_sum[b] += static_cast<double>(rec.per_bin_counts[b]) / static_cast<double>(rec.per_bin_totals[b]);
            ++bin_hits[b];
        }
    }
    s.mean /= static_cast<double>(runs);
    if (runs > 1) {
        double ss = 0.0;
        for (const auto& row : s.rows) ss += (row.final_fraction - s.mean) * (row.final_fraction - s.mean);
        s.std_dev = std::sqrt(ss / static_cast<double>(runs - 1));
    }
    s.per_bin_mean.resize(bins);
    for (std::size_t b = 0; b < bins; ++b)
        s.per_bin_mean[b] = bin_hits[b] ? bin_sum[b] / static_cast<double>(bin_hits[b])
                                        : std::numeric_limits<double>::quiet_NaN();
    return s;
}

}  // namespace kbp
