#pragma once

// Hand-rolled generators and brute-force reference implementations shared by the
// unit tests and the acceptance runner. Everything here is deliberately naive.

#include "dygraph/rng.hpp"
#include "dygraph/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <vector>

namespace dygraph::testing {

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.uniform(lo, hi);
    }
    return v;
}

inline std::vector<double> random_integer_vector(Rng& rng, std::size_t n, int lo, int hi) {
    std::vector<double> v(n);
    for (auto& x : v) {
        x = static_cast<double>(rng.uniform_int(lo, hi));
    }
    return v;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (auto& x : t.values()) {
        x = rng.uniform(lo, hi);
    }
    return t;
}

/// Minimum squared-difference cost over every monotone warping path from (0,0) to
/// (n-1,m-1), found by explicit depth-first enumeration of the paths.
inline double dtw_sq_enumerate(std::span<const double> a, std::span<const double> b) {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<std::pair<std::size_t, std::size_t>> path;
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t i, std::size_t j) {
        path.emplace_back(i, j);
        if (i == n - 1 && j == m - 1) {
            double cost = 0.0;
            for (const auto& [pi, pj] : path) {
                cost += (a[pi] - b[pj]) * (a[pi] - b[pj]);
            }
            best = std::min(best, cost);
        } else {
            if (i + 1 < n) walk(i + 1, j);
            if (j + 1 < m) walk(i, j + 1);
            if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1);
        }
        path.pop_back();
    };
    walk(0, 0);
    return best;
}

/// Labeled runs as [start, end] pairs.
inline std::vector<std::pair<std::size_t, std::size_t>> label_runs(std::span<const int> labels) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (labels[t] != 0 && (t == 0 || labels[t - 1] == 0)) {
            std::size_t e = t;
            while (e + 1 < labels.size() && labels[e + 1] != 0) {
                ++e;
            }
            runs.emplace_back(t, e);
        }
    }
    return runs;
}

/// Segment-wise point adjustment written independently of the library version.
inline std::vector<int> point_adjust_segments(std::span<const int> labels, std::span<const int> preds) {
    std::vector<int> out(preds.begin(), preds.end());
    for (const auto& [s, e] : label_runs(labels)) {
        bool hit = false;
        for (std::size_t t = s; t <= e; ++t) {
            hit = hit || preds[t] != 0;
        }
        if (hit) {
            for (std::size_t t = s; t <= e; ++t) {
                out[t] = 1;
            }
        }
    }
    return out;
}

struct BruteF1 {
    double threshold = 0.0;
    double f1 = 0.0;
};

inline double f1_of(std::span<const int> labels, std::span<const int> preds) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        tp += labels[t] && preds[t];
        fp += !labels[t] && preds[t];
        fn += labels[t] && !preds[t];
    }
    return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

/// Tries every distinct score as threshold from scratch; ties go to the larger threshold.
inline BruteF1 best_f1_brute(std::span<const double> scores, std::span<const int> labels, bool adjust) {
    const std::set<double> candidates(scores.begin(), scores.end());
    BruteF1 best{*candidates.rbegin(), -1.0};
    for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
        std::vector<int> preds(scores.size());
        for (std::size_t t = 0; t < scores.size(); ++t) {
            preds[t] = scores[t] >= *it ? 1 : 0;
        }
        if (adjust) {
            preds = point_adjust_segments(labels, preds);
        }
        const double f = f1_of(labels, preds);
        if (f > best.f1) {
            best = {*it, f};
        }
    }
    return best;
}

/// Central difference of a scalar function of one tensor entry.
inline double central_difference(const std::function<double()>& f, double& entry, double h) {
    const double saved = entry;
    entry = saved + h;
    const double plus = f();
    entry = saved - h;
    const double minus = f();
    entry = saved;
    return (plus - minus) / (2 * h);
}

} // namespace dygraph::testing
