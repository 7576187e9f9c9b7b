#pragma once

#include <cstddef>
#include <string>

namespace dygraph {

/// Component switches reproducing the ablation settings.
struct Ablation {
    bool wo_ts = false;                 ///< drop the series forecast from loss and score
    bool wo_graph = false;              ///< drop the graph forecast from loss and score
    bool recent_graph_only = false;     ///< predicted graph := most recent observed graph
    bool wo_recent_graph = false;       ///< predicted graph := decoder output E
    bool wo_static_graph = false;       ///< encoder adjacency := dynamic graph only
    bool wo_recent_and_static = false;  ///< wo_recent_graph + wo_static_graph
    bool wo_static_and_dynamic = false; ///< series path skips graph convolution entirely

    bool uses_ts() const { return !wo_ts; }
    bool uses_graph() const { return !wo_graph; }
    /// Whether the learned graph head runs at all.
    bool runs_graph_head() const { return uses_graph() && !recent_graph_only; }
    bool blends_recent() const { return !wo_recent_graph && !wo_recent_and_static; }
    bool uses_static_graph() const { return !wo_static_graph && !wo_recent_and_static; }

    /// Throws ConfigError on incompatible combinations.
    void validate() const;
    std::string describe() const;
};

struct ModelConfig {
    std::size_t num_series = 0;
    std::size_t d = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t m = 6;
    std::size_t w = 5;
    std::size_t mixhop_depth = 2;
    double mixhop_beta = 0.05;
    std::size_t inception_layers = 1;
    double l2_eps = 1e-12;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    Ablation ablation;

    std::size_t window() const { return m * w; }
    void validate() const;
};

} // namespace dygraph
