#include "dygraph/model_config.hpp"

#include "dygraph/errors.hpp"

#include <vector>

namespace dygraph {

void Ablation::validate() const {
    if (wo_ts && wo_graph) {
        throw ConfigError("wo_ts and wo_graph cannot both be set: nothing would be trained");
    }
    const int graph_modes = int(recent_graph_only) + int(wo_recent_graph) + int(wo_recent_and_static);
    if (graph_modes > 1) {
        throw ConfigError("recent_graph_only, wo_recent_graph and wo_recent_and_static are mutually exclusive");
    }
    if (wo_graph && graph_modes > 0) {
        throw ConfigError("graph-forecast ablations need the graph task; unset wo_graph");
    }
    if (wo_ts && wo_static_and_dynamic) {
        throw ConfigError("wo_static_and_dynamic only affects the series task; unset wo_ts");
    }
    if (recent_graph_only && wo_ts) {
        // Valid, but the model has nothing left to learn; training still runs.
    }
}

std::string Ablation::describe() const {
    std::vector<std::string> parts;
    if (wo_ts) parts.emplace_back("wo_ts");
    if (wo_graph) parts.emplace_back("wo_graph");
    if (recent_graph_only) parts.emplace_back("recent_graph_only");
    if (wo_recent_graph) parts.emplace_back("wo_recent_graph");
    if (wo_static_graph) parts.emplace_back("wo_static_graph");
    if (wo_recent_and_static) parts.emplace_back("wo_recent_and_static");
    if (wo_static_and_dynamic) parts.emplace_back("wo_static_and_dynamic");
    if (parts.empty()) {
        return "full";
    }
    std::string out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        out += "+" + parts[i];
    }
    return out;
}

void ModelConfig::validate() const {
    if (num_series == 0) {
        throw ConfigError("model needs at least one series");
    }
    if (d == 0 || layers == 0 || m == 0 || w == 0) {
        throw ConfigError("d, L, m and w must be positive");
    }
    if (m < 2) {
        throw ConfigError("m must be >= 2: the graph head forecasts graph m from graphs 1..m-1");
    }
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide d (" + std::to_string(d) + ")");
    }
    if (window() < 7) {
        throw ConfigError("window too short for inception kernels: c = m*w = " + std::to_string(window()) +
                          " < 7");
    }
    if (inception_layers == 0) {
        throw ConfigError("inception_layers must be >= 1");
    }
    if (!(mixhop_beta >= 0.0 && mixhop_beta <= 1.0)) {
        throw ConfigError("mixhop_beta must be in [0, 1]");
    }
    ablation.validate();
}

} // namespace dygraph
