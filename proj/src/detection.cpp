#include "dygraph/detection.hpp"

#include "dygraph/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace dygraph {

std::size_t ScoreSeries::first_valid() const {
    const auto it = std::find(valid.begin(), valid.end(), char{1});
    return static_cast<std::size_t>(it - valid.begin());
}

std::vector<double> ScoreSeries::valid_scores() const {
    std::vector<double> out;
    for (std::size_t t = 0; t < valid.size(); ++t) {
        if (valid[t]) {
            out.push_back(combined_mean[t]);
        }
    }
    return out;
}

std::vector<int> ScoreSeries::valid_labels(std::span<const int> labels) const {
    if (labels.size() != valid.size()) {
        throw ArgumentError("valid_labels: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(valid.size()) + " steps");
    }
    std::vector<int> out;
    for (std::size_t t = 0; t < valid.size(); ++t) {
        if (valid[t]) {
            out.push_back(labels[t]);
        }
    }
    return out;
}

double combine_errors(double err_ts, double err_graph) {
    const double denom = err_ts + err_graph;
    return denom > 0.0 ? err_ts * err_graph / denom : 0.0;
}

ScoreSeries score(Model& model, const LabeledSeries& series, GraphCache& cache, std::size_t batch_size) {
    const ModelConfig& mc = model.config();
    const Ablation& ab = mc.ablation;
    const std::size_t n = series.num_series();
    const std::size_t steps = series.length();
    if (n != mc.num_series) {
        throw ArgumentError("score: model expects " + std::to_string(mc.num_series) + " series, data has " +
                            std::to_string(n));
    }
    ScoreSeries out;
    out.num_series = n;
    out.err_ts = Tensor({steps, n});
    out.err_graph = Tensor({steps, n});
    out.combined = Tensor({steps, n});
    out.ts_mean.assign(steps, 0.0);
    out.graph_mean.assign(steps, 0.0);
    out.combined_mean.assign(steps, 0.0);
    out.valid.assign(steps, 0);

    const auto windows = make_windows(series, mc.m, mc.w, 1);
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].has_target()) {
            indices.push_back(i);
        }
    }
    const auto inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, indices.size() - start);
        const Batch batch = make_batch(windows, std::span(indices).subspan(start, len), mc.m, mc.w, cache);
        const ForwardResult fwd = model.forward(batch, NormMode::Eval);
        const Tensor& observed = batch.graphs.back();
        for (std::size_t b = 0; b < len; ++b) {
            const std::size_t t = batch.end_indices[b] + 1;
            double sum_ts = 0.0;
            double sum_graph = 0.0;
            double sum_combined = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double e_ts = 0.0;
                double e_graph = 0.0;
                if (ab.uses_ts()) {
                    const double diff = batch.targets.at(b, i) - fwd.y_hat.value().at(b, i);
                    e_ts = diff * diff;
                }
                if (ab.uses_graph()) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double diff = observed.at(b, i, j) - fwd.a_hat.value().at(b, i, j);
                        e_graph += diff * diff;
                    }
                    e_graph *= inv_n;
                }
                double e_combined = 0.0;
                if (ab.uses_ts() && ab.uses_graph()) {
                    e_combined = combine_errors(e_ts, e_graph);
                } else {
                    e_combined = ab.uses_ts() ? e_ts : e_graph;
                }
                out.err_ts.at(t, i) = e_ts;
                out.err_graph.at(t, i) = e_graph;
                out.combined.at(t, i) = e_combined;
                sum_ts += e_ts;
                sum_graph += e_graph;
                sum_combined += e_combined;
            }
            out.ts_mean[t] = sum_ts * inv_n;
            out.graph_mean[t] = sum_graph * inv_n;
            out.combined_mean[t] = sum_combined * inv_n;
            out.valid[t] = 1;
        }
    }
    return out;
}

void write_scores(const std::filesystem::path& path, const ScoreSeries& scores,
                  const std::optional<std::vector<int>>& labels) {
    if (labels && labels->size() != scores.length()) {
        throw ArgumentError("write_scores: label length mismatch");
    }
    std::ofstream out(path);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    out << "t,err_ts,err_graph,combined" << (labels ? ",label" : "") << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < scores.length(); ++t) {
        out << t << ',' << scores.ts_mean[t] << ',' << scores.graph_mean[t] << ',' << scores.combined_mean[t];
        if (labels) {
            out << ',' << (*labels)[t];
        }
        out << '\n';
    }
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) {
        throw ArgumentError("quantile of an empty sample");
    }
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<double> iqr_scale(std::span<const double> scores, std::span<const double> train_scores) {
    if (train_scores.empty()) {
        throw ArgumentError("iqr_scale: empty training scores");
    }
    std::vector<double> sorted(train_scores.begin(), train_scores.end());
    std::sort(sorted.begin(), sorted.end());
    const double median = quantile_sorted(sorted, 0.5);
    double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    if (iqr == 0.0) {
        iqr = 1.0;
    }
    std::vector<double> out;
    out.reserve(scores.size());
    for (double s : scores) {
        out.push_back((s - median) / iqr);
    }
    return out;
}

std::vector<int> point_adjust(std::span<const int> labels, std::span<const int> preds) {
    if (labels.size() != preds.size()) {
        throw ArgumentError("point_adjust: " + std::to_string(labels.size()) + " labels vs " +
                            std::to_string(preds.size()) + " predictions");
    }
    std::vector<int> out(preds.begin(), preds.end());
    std::size_t t = 0;
    while (t < labels.size()) {
        if (labels[t] == 0) {
            ++t;
            continue;
        }
        std::size_t end = t;
        bool hit = false;
        while (end < labels.size() && labels[end] != 0) {
            hit = hit || preds[end] != 0;
            ++end;
        }
        if (hit) {
            std::fill(out.begin() + static_cast<long>(t), out.begin() + static_cast<long>(end), 1);
        }
        t = end;
    }
    return out;
}

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw ArgumentError("scores and labels differ in length: " + std::to_string(scores.size()) + " vs " +
                            std::to_string(labels.size()));
    }
    for (double s : scores) {
        if (std::isnan(s)) {
            throw ArgumentError("scores contain NaN");
        }
    }
}

void finish(EvalReport& r) {
    const auto tp = static_cast<double>(r.tp);
    r.precision = r.tp + r.fp > 0 ? tp / static_cast<double>(r.tp + r.fp) : 0.0;
    r.recall = r.tp + r.fn > 0 ? tp / static_cast<double>(r.tp + r.fn) : 0.0;
    const std::size_t denom = 2 * r.tp + r.fp + r.fn;
    r.f1 = denom > 0 ? 2.0 * tp / static_cast<double>(denom) : 0.0;
}

} // namespace

EvalReport evaluate_threshold(std::span<const double> scores, std::span<const int> labels, double threshold,
                              bool adjust) {
    check_inputs(scores, labels);
    std::vector<int> preds(scores.size());
    for (std::size_t t = 0; t < scores.size(); ++t) {
        preds[t] = scores[t] >= threshold ? 1 : 0;
    }
    if (adjust) {
        preds = point_adjust(labels, preds);
    }
    EvalReport r;
    r.threshold = threshold;
    r.point_adjusted = adjust;
    for (std::size_t t = 0; t < scores.size(); ++t) {
        if (labels[t] != 0) {
            (preds[t] != 0 ? r.tp : r.fn) += 1;
        } else {
            (preds[t] != 0 ? r.fp : r.tn) += 1;
        }
    }
    finish(r);
    return r;
}

EvalReport best_f1(std::span<const double> scores, std::span<const int> labels, bool adjust) {
    check_inputs(scores, labels);
    const std::size_t len = scores.size();
    // Label runs: every anomalous step knows its run and the run's length.
    std::vector<std::size_t> run_of(len, 0);
    std::vector<std::size_t> run_length;
    std::size_t positives = 0;
    for (std::size_t t = 0; t < len; ++t) {
        if (labels[t] == 0) {
            continue;
        }
        ++positives;
        if (t == 0 || labels[t - 1] == 0) {
            run_length.push_back(0);
        }
        run_of[t] = run_length.size() - 1;
        ++run_length.back();
    }
    if (positives == 0) {
        throw ArgumentError("best_f1: labels contain no anomalies, recall is undefined");
    }
    std::vector<std::size_t> order(len);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // Lowering the threshold through the distinct scores only ever adds predictions, so
    // the confusion counts update incrementally.
    std::vector<char> detected(run_length.size(), 0);
    std::size_t tp = 0;
    std::size_t fp = 0;
    double best = -1.0;
    double best_threshold = scores[order.front()];
    std::size_t k = 0;
    while (k < len) {
        const double theta = scores[order[k]];
        while (k < len && scores[order[k]] == theta) {
            const std::size_t t = order[k];
            if (labels[t] == 0) {
                ++fp;
            } else if (!adjust) {
                ++tp;
            } else if (!detected[run_of[t]]) {
                detected[run_of[t]] = 1;
                tp += run_length[run_of[t]];
            }
            ++k;
        }
        const std::size_t fn = positives - tp;
        const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        if (f1 > best) {
            best = f1;
            best_threshold = theta;
        }
    }
    return evaluate_threshold(scores, labels, best_threshold, adjust);
}

double DeviationReport::fraction_abnormal_larger() const {
    if (!has_abnormal() || normal.empty()) {
        return 0.0;
    }
    std::size_t larger = 0;
    for (std::size_t i = 0; i < normal.size(); ++i) {
        larger += abnormal[i] > normal[i] ? 1 : 0;
    }
    return static_cast<double>(larger) / static_cast<double>(normal.size());
}

DeviationReport deviation_report(const LabeledSeries& series, GraphCache& cache) {
    if (!series.labels) {
        throw ArgumentError("deviation_report: series has no labels");
    }
    const std::size_t n = series.num_series();
    const std::size_t w = cache.segment_width();
    const std::size_t steps = series.length();
    const auto& labels = *series.labels;
    std::vector<GraphPtr> graphs;
    std::vector<char> abnormal_segment;
    for (std::size_t end = w - 1; end < steps; end += w) {
        graphs.push_back(cache.get_or_build(end, series_segment(series, end, w)));
        const bool any = std::any_of(labels.begin() + static_cast<long>(end + 1 - w),
                                     labels.begin() + static_cast<long>(end + 1), [](int v) { return v != 0; });
        abnormal_segment.push_back(any ? 1 : 0);
    }
    DeviationReport report;
    report.normal.assign(n, 0.0);
    std::vector<double> abnormal(n, 0.0);
    if (graphs.size() >= 2) {
        const Tensor deviation = node_weight_deviation(std::span<const GraphPtr>(graphs));
        for (std::size_t k = 0; k + 1 < graphs.size(); ++k) {
            if (abnormal_segment[k]) {
                continue;
            }
            const bool into_abnormal = abnormal_segment[k + 1] != 0;
            auto& target = into_abnormal ? abnormal : report.normal;
            for (std::size_t i = 0; i < n; ++i) {
                target[i] += deviation.at(i, k);
            }
            (into_abnormal ? report.abnormal_transitions : report.normal_transitions) += 1;
        }
    }
    if (report.normal_transitions > 0) {
        for (auto& v : report.normal) {
            v /= static_cast<double>(report.normal_transitions);
        }
    }
    if (report.abnormal_transitions > 0) {
        for (auto& v : abnormal) {
            v /= static_cast<double>(report.abnormal_transitions);
        }
        report.abnormal = std::move(abnormal);
    }
    return report;
}

void write_eval_report(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, EvalReport>>& reports,
                       const std::optional<double>& val_threshold) {
    nlohmann::json doc;
    for (const auto& [name, r] : reports) {
        doc[name] = {{"threshold", r.threshold}, {"tp", r.tp},           {"fp", r.fp},
                     {"fn", r.fn},               {"tn", r.tn},           {"precision", r.precision},
                     {"recall", r.recall},       {"F1", r.f1},           {"point_adjusted", r.point_adjusted}};
    }
    if (val_threshold) {
        doc["val_threshold"] = *val_threshold;
    }
    std::ofstream out(path);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

} // namespace dygraph
