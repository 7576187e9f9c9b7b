#include "dygraph/graphs.hpp"

#include "dygraph/errors.hpp"
#include "dygraph/kernel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <mutex>

namespace dygraph {

static_assert(std::endian::native == std::endian::little, "graph store and checkpoints assume a little-endian host");

double dtw_sq(std::span<const double> a, std::span<const double> b, std::size_t band) {
    if (a.empty() || b.empty()) {
        throw ArgumentError("dtw_sq: empty input");
    }
    if (a.size() != b.size()) {
        throw ArgumentError("dtw_sq: inputs differ in length");
    }
    const std::size_t len = a.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    // Two rows of the (len+1) x (len+1) cost table; row-major fill order.
    std::vector<double> prev(len + 1, inf);
    std::vector<double> curr(len + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= len; ++i) {
        std::fill(curr.begin(), curr.end(), inf);
        std::size_t lo = 1;
        std::size_t hi = len;
        if (band > 0) {
            lo = i > band ? i - band : 1;
            hi = std::min(len, i + band);
        }
        for (std::size_t j = lo; j <= hi; ++j) {
            const double diff = a[i - 1] - b[j - 1];
            const double best = std::min({prev[j], curr[j - 1], prev[j - 1]});
            curr[j] = diff * diff + best;
        }
        std::swap(prev, curr);
    }
    return prev[len];
}

CorrelationGraph correlation_graph(const Tensor& segment, double tau, std::size_t window_end, std::size_t band) {
    if (!(tau > 0.0)) {
        throw ArgumentError("correlation_graph: tau must be positive");
    }
    if (segment.rank() != 2 || segment.dim(1) == 0) {
        throw ArgumentError("correlation_graph: segment must be [N, w] with w >= 1");
    }
    const std::size_t n = segment.dim(0);
    const std::size_t w = segment.dim(1);
    CorrelationGraph graph;
    graph.window_end = window_end;
    graph.tau = tau;
    graph.adjacency = Tensor({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        graph.adjacency.at(i, i) = 1.0;
        const std::span<const double> row_i(segment.ptr() + i * w, w);
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::span<const double> row_j(segment.ptr() + j * w, w);
            const double value = std::exp(-dtw_sq(row_i, row_j, band) / tau);
            graph.adjacency.at(i, j) = value;
            graph.adjacency.at(j, i) = value;
        }
    }
    return graph;
}

GraphCache::GraphCache(std::size_t num_series, std::size_t w, double tau, std::size_t capacity, std::size_t band)
    : num_series_(num_series), w_(w), tau_(tau), capacity_(capacity), band_(band) {
    if (!(tau > 0.0)) {
        throw ArgumentError("GraphCache: tau must be positive");
    }
    if (w == 0) {
        throw ArgumentError("GraphCache: segment width must be positive");
    }
}

GraphPtr GraphCache::find(std::size_t window_end) const {
    std::shared_lock lock(mutex_);
    auto it = graphs_.find(window_end);
    return it == graphs_.end() ? nullptr : it->second;
}

GraphPtr GraphCache::get_or_build(std::size_t window_end, const Tensor& segment) {
    if (auto hit = find(window_end)) {
        ++hits_;
        return hit;
    }
    ++misses_;
    if (segment.rank() != 2 || segment.dim(0) != num_series_ || segment.dim(1) != w_) {
        throw ArgumentError("GraphCache: segment shape " + shape_string(segment.shape()) + " does not match cache");
    }
    auto graph = std::make_shared<const CorrelationGraph>(correlation_graph(segment, tau_, window_end, band_));
    insert(window_end, graph);
    return graph;
}

void GraphCache::insert(std::size_t window_end, GraphPtr graph) {
    std::unique_lock lock(mutex_);
    if (capacity_ != 0 && graphs_.size() >= capacity_) {
        return;
    }
    graphs_.try_emplace(window_end, std::move(graph));
}

std::size_t GraphCache::size() const {
    std::shared_lock lock(mutex_);
    return graphs_.size();
}

std::vector<GraphPtr> GraphCache::snapshot() const {
    std::shared_lock lock(mutex_);
    std::vector<GraphPtr> out;
    out.reserve(graphs_.size());
    for (const auto& [end, graph] : graphs_) {
        out.push_back(graph);
    }
    return out;
}

GraphSequence build_sequence(const WindowSample& sample, std::size_t m, std::size_t w, double tau, GraphCache* cache,
                             std::size_t band) {
    const std::size_t c = m * w;
    if (sample.window.rank() != 2 || sample.window.dim(1) != c) {
        throw ArgumentError("build_sequence: window has shape " + shape_string(sample.window.shape()) +
                            ", expected c = " + std::to_string(c) + " columns");
    }
    if (cache != nullptr && (cache->segment_width() != w || cache->tau() != tau)) {
        throw ArgumentError("build_sequence: cache built for a different w or tau");
    }
    const std::size_t n = sample.window.dim(0);
    GraphSequence seq;
    seq.graphs.reserve(m);
    Tensor segment({n, w});
    for (std::size_t s = 0; s < m; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(sample.window.ptr() + i * c + s * w, w, segment.ptr() + i * w);
        }
        const std::size_t end = sample.end_index + 1 - c + (s + 1) * w - 1;
        if (cache != nullptr) {
            seq.graphs.push_back(cache->get_or_build(end, segment));
        } else {
            seq.graphs.push_back(std::make_shared<const CorrelationGraph>(correlation_graph(segment, tau, end, band)));
        }
    }
    return seq;
}

Tensor series_segment(const LabeledSeries& series, std::size_t window_end, std::size_t w) {
    const std::size_t steps = series.length();
    if (window_end >= steps || window_end + 1 < w) {
        throw ArgumentError("series_segment: window end " + std::to_string(window_end) + " out of range");
    }
    const std::size_t n = series.num_series();
    Tensor segment({n, w});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(series.values.ptr() + i * steps + window_end + 1 - w, w, segment.ptr() + i * w);
    }
    return segment;
}

void populate_cache(const LabeledSeries& series, GraphCache& cache, std::size_t chunk) {
    const std::size_t w = cache.segment_width();
    const std::size_t steps = series.length();
    if (series.num_series() != cache.num_series()) {
        throw ArgumentError("populate_cache: series count differs from cache");
    }
    if (steps < w) {
        return;
    }
    std::vector<std::size_t> missing;
    for (std::size_t end = w - 1; end < steps; ++end) {
        if (!cache.find(end)) {
            missing.push_back(end);
        }
    }
    if (cache.band() != 0) {
        // The C boundary has no band argument.
        for (std::size_t end : missing) {
            cache.get_or_build(end, series_segment(series, end, w));
        }
        return;
    }
    const auto kernel = resolve_batch_kernel(default_kernel_mode());
    chunk = std::max<std::size_t>(chunk, 1);
    for (std::size_t begin = 0; begin < missing.size(); begin += chunk) {
        const std::size_t end = std::min(missing.size(), begin + chunk);
        std::vector<Tensor> windows;
        for (std::size_t k = begin; k < end; ++k) {
            windows.push_back(series_segment(series, missing[k], w));
        }
        auto adjacency = batch_correlation_graphs(windows, cache.tau(), kernel);
        for (std::size_t k = begin; k < end; ++k) {
            auto graph = std::make_shared<CorrelationGraph>();
            graph->adjacency = std::move(adjacency[k - begin]);
            graph->window_end = missing[k];
            graph->tau = cache.tau();
            cache.insert(missing[k], std::move(graph));
        }
    }
}

namespace {

template <typename GetAdjacency>
Tensor node_weight_deviation_impl(std::size_t len, GetAdjacency adjacency_of) {
    if (len < 2) {
        throw ArgumentError("node_weight_deviation: need at least two graphs");
    }
    const std::size_t n = adjacency_of(0).dim(0);
    Tensor out({n, len - 1});
    std::vector<double> prev(n);
    std::vector<double> curr(n);
    auto weights = [n](const Tensor& a, std::vector<double>& dst) {
        if (a.rank() != 2 || a.dim(0) != n || a.dim(1) != n) {
            throw ArgumentError("node_weight_deviation: graphs differ in node count");
        }
        for (std::size_t i = 0; i < n; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                total += a.at(i, j);
            }
            dst[i] = total;
        }
    };
    weights(adjacency_of(0), prev);
    for (std::size_t k = 1; k < len; ++k) {
        weights(adjacency_of(k), curr);
        for (std::size_t i = 0; i < n; ++i) {
            out.at(i, k - 1) = std::abs(curr[i] - prev[i]);
        }
        std::swap(prev, curr);
    }
    return out;
}

void write_u64(std::ofstream& out, std::uint64_t value) { out.write(reinterpret_cast<const char*>(&value), 8); }

void write_f64(std::ofstream& out, double value) { out.write(reinterpret_cast<const char*>(&value), 8); }

std::uint64_t read_u64(std::ifstream& in, const std::filesystem::path& path) {
    std::uint64_t value = 0;
    if (!in.read(reinterpret_cast<char*>(&value), 8)) {
        throw LoadError(path.string() + ": truncated graph store");
    }
    return value;
}

} // namespace

Tensor node_weight_deviation(std::span<const CorrelationGraph> sequence) {
    return node_weight_deviation_impl(sequence.size(),
                                      [&](std::size_t k) -> const Tensor& { return sequence[k].adjacency; });
}

Tensor node_weight_deviation(std::span<const GraphPtr> sequence) {
    return node_weight_deviation_impl(sequence.size(),
                                      [&](std::size_t k) -> const Tensor& { return sequence[k]->adjacency; });
}

void save_graph_store(const std::filesystem::path& path, const GraphStore& store) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    write_u64(out, store.num_series);
    write_u64(out, store.w);
    write_f64(out, store.tau);
    write_u64(out, store.graphs.size());
    const std::size_t nn = store.num_series * store.num_series;
    for (const auto& graph : store.graphs) {
        if (graph.size() != nn) {
            throw ArgumentError("save_graph_store: graph size does not match N");
        }
        out.write(reinterpret_cast<const char*>(graph.ptr()), static_cast<std::streamsize>(nn * sizeof(double)));
    }
}

GraphStore load_graph_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    GraphStore store;
    store.num_series = read_u64(in, path);
    store.w = read_u64(in, path);
    double tau = 0.0;
    if (!in.read(reinterpret_cast<char*>(&tau), 8)) {
        throw LoadError(path.string() + ": truncated graph store");
    }
    store.tau = tau;
    const std::uint64_t count = read_u64(in, path);
    const std::size_t n = store.num_series;
    const auto header_end = in.tellg();
    in.seekg(0, std::ios::end);
    const auto remaining = static_cast<std::uint64_t>(in.tellg() - header_end);
    in.seekg(header_end);
    if (store.w == 0 || n == 0 || remaining != count * n * n * sizeof(double)) {
        throw LoadError(path.string() + ": graph store header does not match its size");
    }
    for (std::uint64_t k = 0; k < count; ++k) {
        Tensor graph({n, n});
        if (!in.read(reinterpret_cast<char*>(graph.ptr()), static_cast<std::streamsize>(n * n * sizeof(double)))) {
            throw LoadError(path.string() + ": truncated graph store");
        }
        store.graphs.push_back(std::move(graph));
    }
    return store;
}

GraphStore store_from_cache(const GraphCache& cache) {
    GraphStore store;
    store.num_series = cache.num_series();
    store.w = cache.segment_width();
    store.tau = cache.tau();
    std::size_t expected = store.w - 1;
    for (const auto& graph : cache.snapshot()) {
        if (graph->window_end != expected) {
            break;
        }
        store.graphs.push_back(graph->adjacency);
        ++expected;
    }
    return store;
}

void fill_cache_from_store(const GraphStore& store, GraphCache& cache) {
    if (store.num_series != cache.num_series() || store.w != cache.segment_width() || store.tau != cache.tau()) {
        throw ArgumentError("graph store (N=" + std::to_string(store.num_series) + ", w=" + std::to_string(store.w) +
                            ") does not match the requested configuration");
    }
    for (std::size_t k = 0; k < store.graphs.size(); ++k) {
        const std::size_t end = store.w - 1 + k;
        auto graph = std::make_shared<CorrelationGraph>();
        graph->adjacency = store.graphs[k];
        graph->window_end = end;
        graph->tau = store.tau;
        cache.insert(end, std::move(graph));
    }
}

} // namespace dygraph
