#pragma once

#include "dygraph/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dygraph {

/// N series of length T, stored row-per-series in `values` ([N, T]).
struct LabeledSeries {
    Tensor values;
    std::optional<std::vector<int>> labels;
    std::vector<std::string> series_names;
    double step_seconds = 1.0;

    std::size_t num_series() const { return values.rank() == 2 ? values.dim(0) : 0; }
    std::size_t length() const { return values.rank() == 2 ? values.dim(1) : 0; }
    double at(std::size_t series, std::size_t step) const { return values.at(series, step); }
};

/// One model input: the N x c window ending at `end_index` and the value at end_index + 1.
struct WindowSample {
    std::size_t end_index = 0;
    Tensor window;
    std::optional<std::vector<double>> target;
    /// Inclusive column ranges of the m segments inside the window.
    std::vector<std::pair<std::size_t, std::size_t>> segment_bounds;

    bool has_target() const { return target.has_value(); }
};

struct NormStats {
    std::vector<double> min;
    std::vector<double> max;
};

/// Reads a header + numeric body CSV. The optional label column is split off into
/// `labels`; every other column becomes a series, in file order.
LabeledSeries load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column = {});

/// Column names in the header of a CSV file.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path, const LabeledSeries& series,
               const std::string& label_column = "label");

/// Median of disjoint blocks of `factor` steps. A block is anomalous if any step in it is.
LabeledSeries downsample_median(const LabeledSeries& series, int factor);

NormStats compute_norm_stats(const LabeledSeries& series);

/// (x - min) / (max - min) per series, no clipping; constant series map to 0.
LabeledSeries minmax_normalize(const LabeledSeries& series, const NormStats& stats);

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats load_norm_stats(const std::filesystem::path& path);

/// Sliding windows of width m*w ending at c-1, c-1+stride, ...; the window ending
/// at T-1 has no next-step target.
std::vector<WindowSample> make_windows(const LabeledSeries& series, std::size_t m, std::size_t w,
                                       std::size_t stride = 1);

/// Contiguous split: the last floor(fraction * n) samples (at least one) are validation.
std::pair<std::vector<WindowSample>, std::vector<WindowSample>> train_val_split(std::vector<WindowSample> samples,
                                                                                double fraction);

} // namespace dygraph
