#pragma once

#include "dygraph/dataio.hpp"
#include "dygraph/graphs.hpp"
#include "dygraph/model.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace dygraph {

/// Per-step anomaly scores over a whole series of length T. The window ending at e
/// yields the score stored at index e + 1: the series error compares the forecast with
/// the value at e + 1 and the graph error compares the forecast of the graph of segment
/// (e - w, e] with the observed one. Steps without a prediction (the first c) stay 0
/// and are marked invalid.
struct ScoreSeries {
    std::size_t num_series = 0;
    Tensor err_ts;     // [T, N]
    Tensor err_graph;  // [T, N]
    Tensor combined;   // [T, N]
    std::vector<double> ts_mean;        // mean over series, length T
    std::vector<double> graph_mean;
    std::vector<double> combined_mean;
    std::vector<char> valid;

    std::size_t length() const { return valid.size(); }
    std::size_t first_valid() const;
    /// combined_mean restricted to valid steps, in time order.
    std::vector<double> valid_scores() const;
    /// labels restricted to valid steps.
    std::vector<int> valid_labels(std::span<const int> labels) const;
};

/// a b / (a + b), 0 when both are 0.
double combine_errors(double err_ts, double err_graph);

/// Scores every step of `series` (already normalized) in eval mode.
ScoreSeries score(Model& model, const LabeledSeries& series, GraphCache& cache, std::size_t batch_size = 256);

void write_scores(const std::filesystem::path& path, const ScoreSeries& scores,
                  const std::optional<std::vector<int>>& labels);

/// (s - median) / IQR of train_scores with linear-interpolation quartiles; IQR 0 -> 1.
std::vector<double> iqr_scale(std::span<const double> scores, std::span<const double> train_scores);
/// Linear-interpolation quantile of already sorted values, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

/// Marks every step of a labeled run as detected once any step in it is.
std::vector<int> point_adjust(std::span<const int> labels, std::span<const int> preds);

struct EvalReport {
    double threshold = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool point_adjusted = false;
};

/// Confusion counts and F1 for preds = (score >= threshold).
EvalReport evaluate_threshold(std::span<const double> scores, std::span<const int> labels, double threshold,
                              bool adjust);
/// Best F1 over every distinct score as threshold (ties go to the larger threshold).
EvalReport best_f1(std::span<const double> scores, std::span<const int> labels, bool adjust);

/// Mean node-weight deviation per node at normal->normal and normal->abnormal transitions
/// between consecutive disjoint segments (window ends w-1, 2w-1, ...).
struct DeviationReport {
    std::vector<double> normal;    // per node
    std::vector<double> abnormal;  // per node; empty when no abnormal transition exists
    std::size_t normal_transitions = 0;
    std::size_t abnormal_transitions = 0;

    bool has_abnormal() const { return abnormal_transitions > 0; }
    /// Fraction of nodes whose abnormal mean exceeds the normal mean.
    double fraction_abnormal_larger() const;
};

DeviationReport deviation_report(const LabeledSeries& series, GraphCache& cache);

void write_eval_report(const std::filesystem::path& path, const std::vector<std::pair<std::string, EvalReport>>& reports,
                       const std::optional<double>& val_threshold);

} // namespace dygraph
