#include "dygraph/synthetic.hpp"

#include "dygraph/errors.hpp"
#include "dygraph/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace dygraph {

namespace {

constexpr std::array<int, 8> kPeriods{40, 48, 56, 60, 64, 72, 80, 90};
constexpr double kHarmonic = 0.3;

// Independent generator streams.
enum Stream : std::uint64_t { kStructure = 1, kNoise = 2, kPlacement = 3 };

struct Driver {
    int period = 60;
    double phase = 0.0;
    double phase2 = 0.0;

    double at(double t) const {
        const double x = 2.0 * std::numbers::pi * t / period;
        return std::sin(x + phase) + kHarmonic * std::sin(2.0 * x + phase2);
    }
};

struct SeriesShape {
    std::size_t driver = 0;
    double amplitude = 1.0;
    double offset = 0.0;
    int lag = 0;
};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    const double mu = mean_of(v);
    double s = 0.0;
    for (double x : v) {
        s += (x - mu) * (x - mu);
    }
    return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace

void SynthSpec::validate() const {
    if (num_series < 2) {
        throw ConfigError("synthetic data needs at least two series");
    }
    if (train_length == 0 || test_length == 0) {
        throw ConfigError("synthetic train and test lengths must be positive");
    }
    if (!(noise_sd >= 0.0) || !(ar_coef > -1.0 && ar_coef < 1.0)) {
        throw ConfigError("noise_sd must be >= 0 and |ar_coef| < 1");
    }
    if (!(onset_jump >= 0.0)) {
        throw ConfigError("onset_jump must be >= 0");
    }
    if (break_min == 0 || break_min > break_max || spike_min == 0 || spike_min > spike_max) {
        throw ConfigError("anomaly length ranges must be non-empty and positive");
    }
}

SynthData generate(const SynthSpec& spec) {
    spec.validate();
    const std::size_t n = spec.num_series;
    const std::size_t total = spec.train_length + spec.test_length;
    Rng structure(spec.seed, kStructure);
    Rng noise_rng(spec.seed, kNoise);
    Rng placement(spec.seed, kPlacement);

    // Series 2k and 2k+1 share driver k; an odd last series gets its own.
    const std::size_t num_drivers = (n + 1) / 2;
    std::vector<Driver> drivers(num_drivers);
    for (auto& d : drivers) {
        d.period = kPeriods[static_cast<std::size_t>(structure.uniform_int(0, kPeriods.size() - 1))];
        d.phase = structure.uniform(0.0, 2.0 * std::numbers::pi);
        d.phase2 = structure.uniform(0.0, 2.0 * std::numbers::pi);
    }
    std::vector<SeriesShape> shapes(n);
    for (std::size_t i = 0; i < n; ++i) {
        shapes[i].driver = i / 2;
        shapes[i].amplitude = structure.uniform(0.8, 1.2);
        shapes[i].offset = structure.uniform(-0.5, 0.5);
        shapes[i].lag = static_cast<int>(structure.uniform_int(0, 3));
    }
    auto clean = [&](std::size_t i, double t, double shift) {
        const SeriesShape& s = shapes[i];
        return s.offset + s.amplitude * drivers[s.driver].at(t - s.lag - shift);
    };
    // AR(1) noise with marginal std noise_sd, started from its stationary distribution.
    const double innovation_sd = spec.noise_sd * std::sqrt(1.0 - spec.ar_coef * spec.ar_coef);
    std::vector<std::vector<double>> noise(n, std::vector<double>(total));
    for (std::size_t i = 0; i < n; ++i) {
        double e = noise_rng.normal(0.0, spec.noise_sd);
        for (std::size_t t = 0; t < total; ++t) {
            noise[i][t] = e;
            e = spec.ar_coef * e + noise_rng.normal(0.0, innovation_sd);
        }
    }
    std::vector<std::vector<double>> values(n, std::vector<double>(total));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < total; ++t) {
            values[i][t] = clean(i, static_cast<double>(t), 0.0) + noise[i][t];
        }
    }
    std::vector<double> train_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        train_std[i] = std_of(std::vector<double>(values[i].begin(),
                                                  values[i].begin() + static_cast<long>(spec.train_length)));
    }

    // Anomaly kinds in random order, lengths drawn per kind.
    std::vector<AnomalyRecord> anomalies;
    for (std::size_t k = 0; k < spec.breaks; ++k) {
        AnomalyRecord a;
        a.kind = "correlation_break";
        // Round-robin over the pairs; the member that breaks away is random.
        const std::size_t pair = k % (n / 2);
        a.series = 2 * pair + static_cast<std::size_t>(placement.uniform_int(0, 1));
        const int period = drivers[shapes[a.series].driver].period;
        // Whole periods keep the shifted series' mean and spread unchanged.
        std::vector<std::size_t> lengths;
        for (std::size_t len = static_cast<std::size_t>(period); len <= spec.break_max; len += period) {
            if (len >= spec.break_min) {
                lengths.push_back(len);
            }
        }
        if (lengths.empty()) {
            throw ConfigError("no whole number of periods of " + std::to_string(period) + " fits in [" +
                              std::to_string(spec.break_min) + ", " + std::to_string(spec.break_max) + "]");
        }
        a.length = lengths[static_cast<std::size_t>(placement.uniform_int(0, lengths.size() - 1))];
        a.magnitude = static_cast<double>(placement.uniform_int(period / 4, 3 * period / 4));
        anomalies.push_back(a);
    }
    for (std::size_t k = 0; k < spec.spikes; ++k) {
        AnomalyRecord a;
        a.kind = "spike";
        a.series = static_cast<std::size_t>(placement.uniform_int(0, n - 1));
        a.length = static_cast<std::size_t>(placement.uniform_int(spec.spike_min, spec.spike_max));
        a.magnitude = spec.spike_sigmas * train_std[a.series];
        anomalies.push_back(a);
    }
    placement.shuffle(anomalies);

    // Placement: a lead-in of c steps, gaps of at least 2c, and c steps of tail; the slack
    // is split at random among the K + 1 free stretches.
    const std::size_t c = spec.window;
    const std::size_t gap = 2 * c;
    // A break may slide forward by up to one period to find an onset with the requested
    // level jump, so it reserves that much extra room.
    auto footprint = [&](const AnomalyRecord& a) {
        return a.kind == "spike" ? a.length
                                 : a.length + static_cast<std::size_t>(drivers[shapes[a.series].driver].period);
    };
    std::size_t needed = 2 * c;
    for (const auto& a : anomalies) {
        needed += footprint(a);
    }
    if (!anomalies.empty()) {
        needed += (anomalies.size() - 1) * gap;
    }
    if (needed > spec.test_length) {
        throw ConfigError("anomalies do not fit in the test split: need " + std::to_string(needed) + " steps, have " +
                          std::to_string(spec.test_length));
    }
    const auto slack = static_cast<std::int64_t>(spec.test_length - needed);
    std::vector<std::int64_t> cuts;
    for (std::size_t k = 0; k < anomalies.size(); ++k) {
        cuts.push_back(placement.uniform_int(0, slack));
    }
    std::sort(cuts.begin(), cuts.end());
    std::size_t cursor = c;
    std::int64_t previous_cut = 0;
    for (std::size_t k = 0; k < anomalies.size(); ++k) {
        cursor += static_cast<std::size_t>(cuts[k] - previous_cut);
        previous_cut = cuts[k];
        anomalies[k].start = cursor;
        cursor += footprint(anomalies[k]) + gap;
    }
    for (auto& a : anomalies) {
        if (a.kind == "spike") {
            continue;
        }
        // The break covers whole periods, so the onset mismatch reappears at the end.
        const std::size_t period = footprint(a) - a.length;
        const double target = spec.onset_jump * train_std[a.series];
        std::size_t best = 0;
        double best_gap = std::numeric_limits<double>::infinity();
        for (std::size_t o = 0; o < period; ++o) {
            const auto t = static_cast<double>(spec.train_length + a.start + o);
            const double mismatch =
                std::abs(std::abs(clean(a.series, t, a.magnitude) - clean(a.series, t, 0.0)) - target);
            if (mismatch < best_gap) {
                best_gap = mismatch;
                best = o;
            }
        }
        a.start += best;
    }

    std::vector<int> labels(spec.test_length, 0);
    for (const auto& a : anomalies) {
        const std::size_t i = a.series;
        std::vector<double> before;
        std::vector<double> after;
        for (std::size_t k = 0; k < a.length; ++k) {
            const std::size_t t = spec.train_length + a.start + k;
            before.push_back(values[i][t]);
            if (a.kind == "spike") {
                values[i][t] += a.magnitude;
            } else {
                values[i][t] = clean(i, static_cast<double>(t), a.magnitude) + noise[i][t];
            }
            after.push_back(values[i][t]);
            labels[a.start + k] = 1;
        }
        if (a.kind == "spike") {
            for (std::size_t k = 0; k < a.length; ++k) {
                if (after[k] - before[k] < 3.0 * train_std[i]) {
                    throw std::logic_error("synthetic spike below 3 sigma on series " + std::to_string(i));
                }
            }
        } else {
            const double ref = std_of(before);
            if (std::abs(mean_of(after) - mean_of(before)) >= 0.1 * ref ||
                std::abs(std_of(after) - ref) >= 0.1 * ref) {
                throw ConfigError("synthetic correlation break changed the marginal statistics of series " +
                                    std::to_string(i) + "; try another seed or a longer break_min");
            }
        }
    }

    SynthData data;
    data.spec = spec;
    data.anomalies = anomalies;
    auto fill = [&](LabeledSeries& out, std::size_t begin, std::size_t length) {
        out.values = Tensor({n, length});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(values[i].begin() + static_cast<long>(begin), length, out.values.ptr() + i * length);
            out.series_names.push_back("s" + std::to_string(i));
        }
        out.labels = std::vector<int>(length, 0);
    };
    fill(data.train, 0, spec.train_length);
    fill(data.test, spec.train_length, spec.test_length);
    data.test.labels = std::move(labels);
    return data;
}

void save_manifest(const std::filesystem::path& path, const SynthData& data) {
    const SynthSpec& s = data.spec;
    nlohmann::json doc;
    doc["generator"] = "dygraph.synthetic";
    doc["version"] = kSynthVersion;
    doc["rng"] = "mt19937_64 seeded through splitmix64, streams 1-3";
    doc["spec"] = {{"num_series", s.num_series},   {"train_length", s.train_length}, {"test_length", s.test_length},
                   {"seed", s.seed},               {"breaks", s.breaks},             {"spikes", s.spikes},
                   {"noise_sd", s.noise_sd},       {"ar_coef", s.ar_coef},           {"spike_sigmas", s.spike_sigmas}, {"onset_jump", s.onset_jump},
                   {"break_min", s.break_min},     {"break_max", s.break_max},       {"spike_min", s.spike_min},
                   {"spike_max", s.spike_max},     {"window", s.window}};
    doc["anomalies"] = nlohmann::json::array();
    for (const auto& a : data.anomalies) {
        doc["anomalies"].push_back({{"kind", a.kind},
                                    {"start", a.start},
                                    {"length", a.length},
                                    {"series", a.series},
                                    {"magnitude", a.magnitude}});
    }
    std::ofstream out(path);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

} // namespace dygraph
