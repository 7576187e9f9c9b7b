#include "dygraph/pipeline.hpp"

#include "dygraph/errors.hpp"

#include <algorithm>

namespace dygraph {

PreparedData prepare_data(const LabeledSeries& train_raw, const LabeledSeries& test_raw, int downsample) {
    if (train_raw.num_series() != test_raw.num_series()) {
        throw ArgumentError("train has " + std::to_string(train_raw.num_series()) + " series, test has " +
                            std::to_string(test_raw.num_series()));
    }
    const LabeledSeries train_ds = downsample_median(train_raw, downsample);
    const LabeledSeries test_ds = downsample_median(test_raw, downsample);
    PreparedData out;
    out.stats = compute_norm_stats(train_ds);
    out.train = minmax_normalize(train_ds, out.stats);
    out.test = minmax_normalize(test_ds, out.stats);
    return out;
}

GraphCaches build_caches(const PreparedData& data, const TrainConfig& config, bool populate) {
    GraphCaches caches;
    const std::size_t n = data.train.num_series();
    caches.train = std::make_unique<GraphCache>(n, config.w, config.tau, 0, config.dtw_band);
    caches.test = std::make_unique<GraphCache>(n, config.w, config.tau, 0, config.dtw_band);
    if (populate) {
        populate_cache(data.train, *caches.train);
        populate_cache(data.test, *caches.test);
    }
    return caches;
}

namespace {

std::vector<double> scores_of(const ScoreSeries& s, const std::vector<double>& values) {
    std::vector<double> out;
    for (std::size_t t = 0; t < s.length(); ++t) {
        if (s.valid[t]) {
            out.push_back(values[t]);
        }
    }
    return out;
}

} // namespace

Experiment run_experiment(const PreparedData& data, GraphCaches& caches, const TrainConfig& config,
                          std::ostream* log) {
    config.validate();
    const ModelConfig mc = config.model_config(data.train.num_series());
    auto windows = make_windows(data.train, config.m, config.w, config.stride);
    auto [train_samples, val_samples] = train_val_split(std::move(windows), config.val_fraction);

    Experiment ex;
    ex.model = std::make_unique<Model>(mc, config.seed);
    ex.report = train(*ex.model, train_samples, val_samples, *caches.train, config, [&](const EpochStats& e) {
        if (log != nullptr) {
            *log << "epoch " << e.epoch << ": train " << e.train.total << " (ts " << e.train.ts << ", graph "
                 << e.train.graph << "), val " << e.val.total << '\n';
        }
    });
    ex.train_scores = score(*ex.model, data.train, *caches.train);
    ex.test_scores = score(*ex.model, data.test, *caches.test);
    // The validation windows predict the steps right after their ends.
    double threshold = 0.0;
    for (const auto& sample : val_samples) {
        const std::size_t t = sample.end_index + 1;
        if (t < ex.train_scores.length() && ex.train_scores.valid[t]) {
            threshold = std::max(threshold, ex.train_scores.combined_mean[t]);
        }
    }
    ex.val_threshold = threshold;
    return ex;
}

DetectionSummary summarize_detection(const ScoreSeries& scores, std::span<const int> labels,
                                     std::optional<double> val_threshold, bool scale,
                                     const ScoreSeries* train_scores) {
    const std::vector<int> valid_labels = scores.valid_labels(labels);
    auto prepare = [&](const std::vector<double>& test_values, const std::vector<double>& train_values) {
        std::vector<double> s = scores_of(scores, test_values);
        if (scale) {
            if (train_scores == nullptr) {
                throw ArgumentError("score scaling needs the training scores");
            }
            s = iqr_scale(s, scores_of(*train_scores, train_values));
        }
        return s;
    };
    const std::vector<double> empty;
    const auto combined = prepare(scores.combined_mean, train_scores ? train_scores->combined_mean : empty);
    const auto ts = prepare(scores.ts_mean, train_scores ? train_scores->ts_mean : empty);
    const auto graph = prepare(scores.graph_mean, train_scores ? train_scores->graph_mean : empty);
    DetectionSummary out;
    out.combined_adjusted = best_f1(combined, valid_labels, true);
    out.combined_raw = best_f1(combined, valid_labels, false);
    out.ts_adjusted = best_f1(ts, valid_labels, true);
    out.graph_adjusted = best_f1(graph, valid_labels, true);
    if (val_threshold && !scale) {
        out.at_val_threshold = evaluate_threshold(combined, valid_labels, *val_threshold, true);
    }
    return out;
}

} // namespace dygraph
