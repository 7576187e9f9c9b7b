#include "dygraph/model.hpp"

#include "dygraph/errors.hpp"

#include <algorithm>

namespace dygraph {

Batch make_batch(std::span<const WindowSample> samples, std::span<const std::size_t> indices, std::size_t m,
                 std::size_t w, GraphCache& cache) {
    if (indices.empty()) {
        throw ArgumentError("make_batch: empty batch");
    }
    const WindowSample& first = samples[indices.front()];
    const std::size_t n = first.window.dim(0);
    const std::size_t c = first.window.dim(1);
    const std::size_t bsz = indices.size();
    Batch batch;
    batch.windows = Tensor({bsz, n, c});
    batch.graphs.assign(m, Tensor({bsz, n, n}));
    const bool with_targets = std::all_of(indices.begin(), indices.end(),
                                          [&](std::size_t i) { return samples[i].has_target(); });
    if (with_targets) {
        batch.targets = Tensor({bsz, n});
    }
    for (std::size_t b = 0; b < bsz; ++b) {
        const WindowSample& sample = samples[indices[b]];
        if (sample.window.dim(0) != n || sample.window.dim(1) != c) {
            throw ArgumentError("make_batch: samples have different window shapes");
        }
        std::copy_n(sample.window.ptr(), n * c, batch.windows.ptr() + b * n * c);
        const GraphSequence seq = build_sequence(sample, m, w, cache.tau(), &cache, cache.band());
        for (std::size_t s = 0; s < m; ++s) {
            std::copy_n(seq.graphs[s]->adjacency.ptr(), n * n, batch.graphs[s].ptr() + b * n * n);
        }
        if (with_targets) {
            std::copy(sample.target->begin(), sample.target->end(), batch.targets.ptr() + b * n);
        }
        batch.end_indices.push_back(sample.end_index);
    }
    return batch;
}

LossParts joint_loss(const ForwardResult& forward, const Batch& batch, const Ablation& ablation) {
    if (!batch.has_targets()) {
        throw ArgumentError("joint_loss: batch contains a sample without a next-step target");
    }
    LossParts parts;
    if (ablation.uses_ts()) {
        const ad::Var ts = ad::mean_squared_error(forward.y_hat, ad::Var::constant(batch.targets));
        parts.ts = ts.item();
        parts.total = ts;
    }
    if (ablation.uses_graph()) {
        const ad::Var graph = ad::mean_squared_error(forward.a_hat, ad::Var::constant(batch.graphs.back()));
        parts.graph = graph.item();
        parts.total = parts.total.defined() ? ad::add(parts.total, graph) : graph;
    }
    return parts;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    // Separate streams keep each module's initialization independent of the others' sizes.
    Rng enc_rng(seed, 1);
    Rng graph_rng(seed, 2);
    Rng ts_rng(seed, 3);
    encoder = EncoderParams::init(config_, enc_rng);
    graph_head = GraphHeadParams::init(config_, graph_rng);
    ts_head = TsHeadParams::init(config_, ts_rng);
}

Model::Model(const Model& other) : config_(other.config_) {
    // Fresh parameter nodes with copied values: the copy shares nothing with the original.
    Rng rng(0);
    encoder = EncoderParams::init(config_, rng);
    graph_head = GraphHeadParams::init(config_, rng);
    ts_head = TsHeadParams::init(config_, rng);
    load_state(other.state());
}

ForwardResult Model::forward(const Batch& batch, NormMode mode) {
    const Ablation& ab = config_.ablation;
    const std::size_t m = config_.m;
    if (batch.graphs.size() != m) {
        throw ArgumentError("forward: batch carries " + std::to_string(batch.graphs.size()) + " graphs, m = " +
                            std::to_string(m));
    }
    const bool ts_needs_hidden = ab.uses_ts() && !ab.wo_static_and_dynamic;
    const bool head_runs = ab.runs_graph_head();
    const std::size_t propagate = ts_needs_hidden ? m : (head_runs ? m - 1 : 0);

    std::vector<ad::Var> graphs;
    graphs.reserve(m);
    for (const auto& g : batch.graphs) {
        graphs.push_back(ad::Var::constant(g));
    }
    const EncoderOutput enc = encode(ad::Var::constant(batch.windows), graphs, encoder, config_, propagate);

    ForwardResult out;
    if (head_runs) {
        graph_head_calls_.fetch_add(1);
        const std::vector<ad::Var> inputs(enc.hidden.begin(), enc.hidden.begin() + static_cast<long>(m - 1));
        GraphForecast gf = forecast_graph(inputs, graphs[m - 2], graph_head, config_);
        out.e = gf.e;
        out.a_hat = gf.a_hat;
    } else if (ab.uses_graph()) {
        out.a_hat = graphs[m - 2];
    }
    if (ab.uses_ts()) {
        const ad::Var mm = assemble_m(ab.wo_static_and_dynamic ? enc.z_segments : enc.hidden, ts_head, mode);
        out.y_hat = forecast_series(enc.c, enc.z, mm, ts_head);
    }
    return out;
}

std::vector<NamedParam> Model::parameters() {
    std::vector<NamedParam> out;
    encoder.collect(out);
    graph_head.collect(out);
    ts_head.collect(out);
    return out;
}

std::vector<NamedBuffer> Model::buffers() {
    std::vector<NamedBuffer> out;
    ts_head.collect_buffers(out);
    return out;
}

TensorArchive Model::state() const {
    // Collection only hands out pointers; archive_of reads through them.
    auto& self = const_cast<Model&>(*this);
    return archive_of(self.parameters(), self.buffers());
}

void Model::load_state(const TensorArchive& archive) { restore_from(archive, parameters(), buffers()); }

void Model::save(const std::filesystem::path& path) const { save_archive(path, state()); }

void Model::load(const std::filesystem::path& path) { load_state(load_archive(path)); }

} // namespace dygraph
