#pragma once

#include "dygraph/dataio.hpp"
#include "dygraph/tensor.hpp"

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <vector>

namespace dygraph {

/// Similarity graph of one w-step segment: A_ij = exp(-dtw_sq(row_i, row_j) / tau).
struct CorrelationGraph {
    Tensor adjacency;
    std::size_t window_end = 0;
    double tau = 1.0;
};

using GraphPtr = std::shared_ptr<const CorrelationGraph>;

/// The m graphs of one window sample, oldest first.
struct GraphSequence {
    std::vector<GraphPtr> graphs;
};

/// Accumulated squared-difference DTW cost over the full warping band (band = 0) or a
/// Sakoe-Chiba band of the given radius. No square root is taken.
double dtw_sq(std::span<const double> a, std::span<const double> b, std::size_t band = 0);

/// segment is [N, w]; only the upper triangle is computed, then mirrored.
CorrelationGraph correlation_graph(const Tensor& segment, double tau, std::size_t window_end = 0,
                                   std::size_t band = 0);

/// Graphs keyed by window-end index of one dataset. Concurrent insert-if-absent is
/// safe; a lost race only duplicates work because values are deterministic.
class GraphCache {
public:
    /// capacity == 0 means unbounded; a full cache still serves lookups and computes misses.
    GraphCache(std::size_t num_series, std::size_t w, double tau, std::size_t capacity = 0, std::size_t band = 0);

    std::size_t num_series() const { return num_series_; }
    std::size_t segment_width() const { return w_; }
    double tau() const { return tau_; }
    std::size_t band() const { return band_; }

    GraphPtr find(std::size_t window_end) const;
    /// Returns the stored graph for window_end, computing it from `segment` on a miss.
    GraphPtr get_or_build(std::size_t window_end, const Tensor& segment);
    void insert(std::size_t window_end, GraphPtr graph);

    std::size_t size() const;
    std::size_t hits() const { return hits_.load(); }
    std::size_t misses() const { return misses_.load(); }
    /// Every cached graph in window-end order.
    std::vector<GraphPtr> snapshot() const;

private:
    std::size_t num_series_;
    std::size_t w_;
    double tau_;
    std::size_t capacity_;
    std::size_t band_;
    mutable std::shared_mutex mutex_;
    std::map<std::size_t, GraphPtr> graphs_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

/// Graph s (0-based) of a sample ending at t covers original steps ending at t - c + (s+1) w.
/// cache may be null, in which case every graph is computed fresh.
GraphSequence build_sequence(const WindowSample& sample, std::size_t m, std::size_t w, double tau,
                             GraphCache* cache, std::size_t band = 0);

/// Segment [end - w + 1, end] of every series.
Tensor series_segment(const LabeledSeries& series, std::size_t window_end, std::size_t w);

/// Fills the cache with the graph of every window end w-1 .. T-1 through the batched kernel.
void populate_cache(const LabeledSeries& series, GraphCache& cache, std::size_t chunk = 512);

/// Column k, row i = |sum_j G_{k+1}(i, j) - sum_j G_k(i, j)|; returns [N, len - 1].
Tensor node_weight_deviation(std::span<const CorrelationGraph> sequence);
Tensor node_weight_deviation(std::span<const GraphPtr> sequence);

/// On-disk graph store: little-endian u64 N, u64 w, f64 tau, u64 count, then count
/// N x N f64 matrices for window ends w-1, w, ..., w-1+count-1.
struct GraphStore {
    std::size_t num_series = 0;
    std::size_t w = 0;
    double tau = 0.0;
    std::vector<Tensor> graphs;
};

void save_graph_store(const std::filesystem::path& path, const GraphStore& store);
GraphStore load_graph_store(const std::filesystem::path& path);
/// Store of the cache's contiguous prefix starting at window end w-1.
GraphStore store_from_cache(const GraphCache& cache);
/// Loads every stored graph into the cache; N, w and tau must agree.
void fill_cache_from_store(const GraphStore& store, GraphCache& cache);

} // namespace dygraph
