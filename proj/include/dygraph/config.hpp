#pragma once

#include "dygraph/model_config.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dygraph {

/// Everything a run needs besides the data. Persisted as `key = value` lines; `#` starts a comment.
struct TrainConfig {
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    Ablation ablation;
    std::size_t d = 64;
    std::size_t L = 2;
    std::size_t m = 6;
    std::size_t w = 5;
    double tau = 1.0;
    std::size_t stride = 1;
    std::size_t heads = 4;
    double val_fraction = 0.2;
    double grad_clip = 0.0;  ///< global gradient-norm cap; 0 disables
    double lr_decay = 1.0;   ///< per-epoch learning-rate multiplier; 1 disables
    int downsample = 1;
    std::size_t mixhop_depth = 2;
    double mixhop_beta = 0.05;
    std::size_t dil_layers = 1;
    std::size_t dtw_band = 0;

    ModelConfig model_config(std::size_t num_series) const;
    /// Throws ConfigError on out-of-range values or incompatible ablation flags.
    void validate() const;

    /// Sets one field from its textual value; unknown keys throw ConfigError listing the valid keys.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();
};

TrainConfig parse_train_config(const std::string& text, const std::string& origin = "<config>");
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& config);
void save_train_config(const std::filesystem::path& path, const TrainConfig& config);

} // namespace dygraph
