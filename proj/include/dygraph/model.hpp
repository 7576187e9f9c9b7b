#pragma once

#include "dygraph/autograd.hpp"
#include "dygraph/dataio.hpp"
#include "dygraph/encoder.hpp"
#include "dygraph/graph_head.hpp"
#include "dygraph/graphs.hpp"
#include "dygraph/model_config.hpp"
#include "dygraph/params.hpp"
#include "dygraph/ts_head.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dygraph {

/// Stacked model inputs for B samples.
struct Batch {
    Tensor windows;              // [B, N, c]
    std::vector<Tensor> graphs;  // m tensors [B, N, N], oldest first
    Tensor targets;              // [B, N]; empty when some sample has no target
    std::vector<std::size_t> end_indices;

    std::size_t size() const { return end_indices.size(); }
    bool has_targets() const { return !targets.empty(); }
};

/// Gathers samples[indices] with their graph sequences (looked up or built through the cache).
Batch make_batch(std::span<const WindowSample> samples, std::span<const std::size_t> indices, std::size_t m,
                 std::size_t w, GraphCache& cache);

struct ForwardResult {
    ad::Var y_hat;  // [B, N]; undefined when the series task is disabled
    ad::Var a_hat;  // [B, N, N]; undefined when the graph task is disabled
    ad::Var e;      // [B, N, N]; undefined when the graph head does not run
};

struct LossParts {
    ad::Var total;
    double ts = 0.0;
    double graph = 0.0;
};

/// mean squared series error + mean squared graph error, restricted to the enabled tasks.
LossParts joint_loss(const ForwardResult& forward, const Batch& batch, const Ablation& ablation);

class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);
    Model(const Model& other);
    Model& operator=(const Model&) = delete;

    const ModelConfig& config() const { return config_; }

    ForwardResult forward(const Batch& batch, NormMode mode);

    std::vector<NamedParam> parameters();
    std::vector<NamedBuffer> buffers();

    TensorArchive state() const;
    void load_state(const TensorArchive& archive);
    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

    /// Number of forward passes that evaluated the learned graph head.
    std::size_t graph_head_calls() const { return graph_head_calls_.load(); }

    EncoderParams encoder;
    GraphHeadParams graph_head;
    TsHeadParams ts_head;

private:
    ModelConfig config_;
    std::atomic<std::size_t> graph_head_calls_{0};
};

} // namespace dygraph
