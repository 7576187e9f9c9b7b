#include "dygraph/dataio.hpp"

#include "dygraph/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dygraph {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

std::string strip_bom(std::string line) {
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
        line.erase(0, 3);
    }
    return line;
}

} // namespace

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw LoadError(path.string() + ": empty file");
    }
    std::vector<std::string> names;
    for (auto cell : split_row(strip_bom(line))) {
        names.emplace_back(cell);
    }
    return names;
}

LabeledSeries load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw LoadError(path.string() + ": empty file");
    }
    line = strip_bom(line);
    std::vector<std::string> header;
    for (auto cell : split_row(line)) {
        header.emplace_back(cell);
    }
    std::optional<std::size_t> label_index;
    if (label_column) {
        auto it = std::find(header.begin(), header.end(), *label_column);
        if (it == header.end()) {
            throw LoadError(path.string() + ": label column '" + *label_column + "' not in header");
        }
        label_index = static_cast<std::size_t>(it - header.begin());
    }
    LabeledSeries series;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (label_index != c) {
            series.series_names.push_back(header[c]);
        }
    }
    if (series.series_names.empty()) {
        throw LoadError(path.string() + ": no series columns");
    }
    const std::size_t n = series.series_names.size();
    std::vector<std::vector<double>> columns(n);
    std::vector<int> labels;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_row(line);
        if (cells.size() != header.size()) {
            throw LoadError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
        }
        std::size_t target = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto cell = cells[c];
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
                throw LoadError(path.string() + ": row " + std::to_string(row) + ", column '" + header[c] +
                                "': invalid number '" + std::string(cell) + "'");
            }
            if (label_index == c) {
                if (value != 0.0 && value != 1.0) {
                    throw LoadError(path.string() + ": row " + std::to_string(row) + ", column '" + header[c] +
                                    "': label must be 0 or 1");
                }
                labels.push_back(static_cast<int>(value));
            } else {
                columns[target++].push_back(value);
            }
        }
    }
    const std::size_t steps = columns.front().size();
    if (steps == 0) {
        throw LoadError(path.string() + ": no data rows");
    }
    series.values = Tensor({n, steps});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(columns[i].begin(), columns[i].end(), series.values.ptr() + i * steps);
    }
    if (label_index) {
        series.labels = std::move(labels);
    }
    return series;
}

void write_csv(const std::filesystem::path& path, const LabeledSeries& series, const std::string& label_column) {
    std::ofstream out(path);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    const std::size_t n = series.num_series();
    for (std::size_t i = 0; i < n; ++i) {
        out << (i ? "," : "") << series.series_names.at(i);
    }
    if (series.labels) {
        out << "," << label_column;
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < series.length(); ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            out << (i ? "," : "") << series.at(i, t);
        }
        if (series.labels) {
            out << "," << (*series.labels)[t];
        }
        out << '\n';
    }
}

LabeledSeries downsample_median(const LabeledSeries& series, int factor) {
    if (factor < 1) {
        throw ArgumentError("downsample factor must be >= 1, got " + std::to_string(factor));
    }
    const auto f = static_cast<std::size_t>(factor);
    const std::size_t n = series.num_series();
    const std::size_t steps = series.length();
    const std::size_t out_steps = (steps + f - 1) / f;
    LabeledSeries out;
    out.series_names = series.series_names;
    out.step_seconds = series.step_seconds * static_cast<double>(f);
    out.values = Tensor({n, out_steps});
    std::vector<double> block;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < out_steps; ++k) {
            const std::size_t begin = k * f;
            const std::size_t end = std::min(steps, begin + f);
            block.assign(series.values.ptr() + i * steps + begin, series.values.ptr() + i * steps + end);
            std::sort(block.begin(), block.end());
            const std::size_t len = block.size();
            out.values.at(i, k) = len % 2 == 1 ? block[len / 2] : 0.5 * (block[len / 2 - 1] + block[len / 2]);
        }
    }
    if (series.labels) {
        std::vector<int> labels(out_steps, 0);
        for (std::size_t t = 0; t < steps; ++t) {
            if ((*series.labels)[t] != 0) {
                labels[t / f] = 1;
            }
        }
        out.labels = std::move(labels);
    }
    return out;
}

NormStats compute_norm_stats(const LabeledSeries& series) {
    const std::size_t n = series.num_series();
    const std::size_t steps = series.length();
    if (steps == 0) {
        throw ArgumentError("cannot compute normalization statistics of an empty series");
    }
    NormStats stats;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = series.values.ptr() + i * steps;
        const auto [lo, hi] = std::minmax_element(row, row + steps);
        stats.min.push_back(*lo);
        stats.max.push_back(*hi);
    }
    return stats;
}

LabeledSeries minmax_normalize(const LabeledSeries& series, const NormStats& stats) {
    const std::size_t n = series.num_series();
    if (stats.min.size() != n || stats.max.size() != n) {
        throw ArgumentError("normalization statistics cover " + std::to_string(stats.min.size()) +
                            " series, data has " + std::to_string(n));
    }
    LabeledSeries out = series;
    const std::size_t steps = series.length();
    for (std::size_t i = 0; i < n; ++i) {
        const double range = stats.max[i] - stats.min[i];
        for (std::size_t t = 0; t < steps; ++t) {
            out.values.at(i, t) = range > 0.0 ? (series.at(i, t) - stats.min[i]) / range : 0.0;
        }
    }
    return out;
}

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
    nlohmann::json doc;
    doc["format"] = "dygraph.norm_stats";
    doc["version"] = 1;
    doc["min"] = stats.min;
    doc["max"] = stats.max;
    std::ofstream out(path);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    // Shortest round-trip representation keeps the stats bit-exact.
    out << doc.dump(2) << '\n';
}

NormStats load_norm_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    try {
        const auto doc = nlohmann::json::parse(in);
        NormStats stats;
        stats.min = doc.at("min").get<std::vector<double>>();
        stats.max = doc.at("max").get<std::vector<double>>();
        if (stats.min.size() != stats.max.size()) {
            throw LoadError(path.string() + ": min/max length mismatch");
        }
        for (std::size_t i = 0; i < stats.min.size(); ++i) {
            if (stats.max[i] < stats.min[i]) {
                throw LoadError(path.string() + ": max < min for series " + std::to_string(i));
            }
        }
        return stats;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

std::vector<WindowSample> make_windows(const LabeledSeries& series, std::size_t m, std::size_t w, std::size_t stride) {
    if (m == 0 || w == 0) {
        throw ArgumentError("window parameters m and w must be positive");
    }
    if (stride == 0) {
        throw ArgumentError("stride must be >= 1");
    }
    const std::size_t c = m * w;
    const std::size_t steps = series.length();
    const std::size_t n = series.num_series();
    if (steps < c) {
        throw ArgumentError("dataset too short: " + std::to_string(steps) + " steps, a window needs " +
                            std::to_string(c));
    }
    std::vector<WindowSample> samples;
    for (std::size_t t = c - 1; t < steps; t += stride) {
        WindowSample sample;
        sample.end_index = t;
        sample.window = Tensor({n, c});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(series.values.ptr() + i * steps + (t + 1 - c), c, sample.window.ptr() + i * c);
        }
        if (t + 1 < steps) {
            std::vector<double> target(n);
            for (std::size_t i = 0; i < n; ++i) {
                target[i] = series.at(i, t + 1);
            }
            sample.target = std::move(target);
        }
        for (std::size_t s = 0; s < m; ++s) {
            sample.segment_bounds.emplace_back(s * w, (s + 1) * w - 1);
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::pair<std::vector<WindowSample>, std::vector<WindowSample>> train_val_split(std::vector<WindowSample> samples,
                                                                                double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ArgumentError("validation fraction must be in (0, 1)");
    }
    if (samples.size() < 2) {
        throw ArgumentError("need at least two samples to split");
    }
    const double raw = fraction * static_cast<double>(samples.size());
    auto val_count = static_cast<std::size_t>(std::floor(raw + 1e-9));
    val_count = std::clamp<std::size_t>(val_count, 1, samples.size() - 1);
    std::vector<WindowSample> val(std::make_move_iterator(samples.end() - static_cast<long>(val_count)),
                                  std::make_move_iterator(samples.end()));
    samples.resize(samples.size() - val_count);
    return {std::move(samples), std::move(val)};
}

} // namespace dygraph
