#pragma once

#include "dygraph/dataio.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dygraph {

/// Parameters of the synthetic benchmark. Series come in pairs that share a periodic
/// driver; test data continues the training process in time and carries two anomaly
/// classes: correlation breaks (one series drifts out of phase with its partner while
/// its own shape is unchanged) and short spikes.
struct SynthSpec {
    std::size_t num_series = 8;
    std::size_t train_length = 4000;
    std::size_t test_length = 4000;
    std::uint64_t seed = 0;
    std::size_t breaks = 6;
    std::size_t spikes = 6;
    double noise_sd = 0.05;     ///< marginal std of the AR(1) noise
    double ar_coef = 0.8;
    double spike_sigmas = 4.0;  ///< spike height in units of the series' training std
    /// Level jump at break onset in units of the series' training std. The onset is placed
    /// at the step whose shifted-vs-original mismatch is closest to this value.
    double onset_jump = 0.5;
    std::size_t break_min = 60;
    std::size_t break_max = 120;
    std::size_t spike_min = 2;
    std::size_t spike_max = 5;
    /// Model window c; anomalies avoid the first c test steps and keep 2c apart.
    std::size_t window = 30;

    void validate() const;
};

struct AnomalyRecord {
    std::string kind;  ///< "correlation_break" or "spike"
    std::size_t start = 0;   ///< test-set index
    std::size_t length = 0;
    std::size_t series = 0;
    double magnitude = 0.0;  ///< phase shift in steps (break) or added level (spike)
};

struct SynthData {
    LabeledSeries train;
    LabeledSeries test;
    std::vector<AnomalyRecord> anomalies;  ///< in time order
    SynthSpec spec;
};

inline constexpr int kSynthVersion = 1;

/// Deterministic in spec (including seed). Throws ConfigError when the anomalies do not fit.
SynthData generate(const SynthSpec& spec);

void save_manifest(const std::filesystem::path& path, const SynthData& data);

} // namespace dygraph
