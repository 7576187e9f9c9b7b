#pragma once

#include "dygraph/config.hpp"
#include "dygraph/dataio.hpp"
#include "dygraph/detection.hpp"
#include "dygraph/graphs.hpp"
#include "dygraph/kernel.hpp"
#include "dygraph/model.hpp"
#include "dygraph/training.hpp"

#include <memory>
#include <optional>
#include <ostream>
#include <vector>

namespace dygraph {

/// Down-sampled, min-max normalized train/test pair (statistics from train only).
struct PreparedData {
    LabeledSeries train;
    LabeledSeries test;
    NormStats stats;
};

PreparedData prepare_data(const LabeledSeries& train_raw, const LabeledSeries& test_raw, int downsample);

/// Window caches for both splits, filled through the selected batch kernel.
struct GraphCaches {
    std::unique_ptr<GraphCache> train;
    std::unique_ptr<GraphCache> test;
};

GraphCaches build_caches(const PreparedData& data, const TrainConfig& config, bool populate = true);

struct Experiment {
    std::unique_ptr<Model> model;
    TrainReport report;
    ScoreSeries train_scores;  ///< every train step, for optional IQR scaling
    ScoreSeries test_scores;
    double val_threshold = 0.0;  ///< largest combined score on the validation tail
};

/// Windows, contiguous validation split, training and scoring of both splits.
Experiment run_experiment(const PreparedData& data, GraphCaches& caches, const TrainConfig& config,
                          std::ostream* log = nullptr);

/// Combined, series-only and graph-only evaluations of a scored test split.
struct DetectionSummary {
    EvalReport combined_adjusted;
    EvalReport combined_raw;
    EvalReport ts_adjusted;
    EvalReport graph_adjusted;
    std::optional<EvalReport> at_val_threshold;
};

DetectionSummary summarize_detection(const ScoreSeries& scores, std::span<const int> labels,
                                     std::optional<double> val_threshold, bool scale,
                                     const ScoreSeries* train_scores);

} // namespace dygraph
