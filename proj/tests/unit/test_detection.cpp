#include "dygraph/detection.hpp"
#include "dygraph/errors.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"
#include "tiny_problem.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace dygraph;
using namespace dygraph::testing;

namespace {

std::vector<int> random_labels(Rng& rng, std::size_t n) {
    std::vector<int> labels(n, 0);
    std::size_t t = 0;
    while (t < n) {
        if (rng.uniform() < 0.08) {
            const auto len = static_cast<std::size_t>(rng.uniform_int(1, 12));
            for (std::size_t k = t; k < std::min(n, t + len); ++k) {
                labels[k] = 1;
            }
            t += len + 1;
        } else {
            ++t;
        }
    }
    if (std::none_of(labels.begin(), labels.end(), [](int v) { return v != 0; })) {
        labels[n / 2] = 1;
    }
    return labels;
}

} // namespace

TEST_SUITE("detection") {

TEST_CASE("combined error") {
    CHECK(combine_errors(2.0, 2.0) == 1.0);
    CHECK(combine_errors(1.0, 3.0) == 0.75);
    CHECK(combine_errors(0.0, 0.0) == 0.0);
    CHECK(combine_errors(0.0, 5.0) == 0.0);
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const double a = rng.uniform(0.0, 3.0);
        const double b = rng.uniform(0.0, 3.0);
        CHECK(combine_errors(a, b) <= std::min(a, b));
    }
}

TEST_CASE("robust scaling") {
    const std::vector<double> train{1, 2, 3, 4, 5};
    CHECK(iqr_scale(std::vector<double>{5.0}, train)[0] == 1.0);
    CHECK(iqr_scale(std::vector<double>{3.0, 1.0}, train) == std::vector<double>{0.0, -1.0});
    const std::vector<double> flat{2, 2, 2};
    CHECK(iqr_scale(std::vector<double>{5.0, 1.5}, flat) == std::vector<double>{3.0, -0.5});
    CHECK_THROWS_AS(iqr_scale(std::vector<double>{1.0}, std::vector<double>{}), ArgumentError);
    const std::vector<double> sorted{0, 10};
    CHECK(quantile_sorted(sorted, 0.25) == 2.5);
    CHECK(quantile_sorted(sorted, 1.0) == 10.0);

    Rng rng(2);
    const auto scores = random_vector(rng, 50, 0.0, 1.0);
    const auto tr = random_vector(rng, 30, 0.0, 1.0);
    const auto scaled = iqr_scale(scores, tr);
    const auto labels = random_labels(rng, 50);
    CHECK(best_f1(scaled, labels, true).f1 == best_f1(scores, labels, true).f1);
}

TEST_CASE("point adjustment examples") {
    CHECK(point_adjust(std::vector<int>{0, 1, 1, 1, 0}, std::vector<int>{0, 0, 1, 0, 0}) ==
          std::vector<int>{0, 1, 1, 1, 0});
    CHECK(point_adjust(std::vector<int>{0, 1, 1, 0}, std::vector<int>{0, 0, 0, 0}) == std::vector<int>{0, 0, 0, 0});
    CHECK(point_adjust(std::vector<int>{1, 1, 0, 1}, std::vector<int>{1, 0, 0, 0}) == std::vector<int>{1, 1, 0, 0});
    CHECK_THROWS_AS(point_adjust(std::vector<int>{1}, std::vector<int>{1, 0}), ArgumentError);
}

TEST_CASE("point adjustment properties") {
    Rng rng(3);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 60));
        const auto labels = random_labels(rng, n);
        std::vector<int> preds(n);
        for (auto& p : preds) {
            p = rng.uniform() < 0.2 ? 1 : 0;
        }
        const auto adjusted = point_adjust(labels, preds);
        CHECK(adjusted == point_adjust_segments(labels, preds));
        CHECK(point_adjust(labels, adjusted) == adjusted);
        for (std::size_t t = 0; t < n; ++t) {
            CHECK(adjusted[t] >= preds[t]);
            if (labels[t] == 0) {
                CHECK(adjusted[t] == preds[t]);
            }
        }
        CHECK(f1_of(labels, adjusted) >= f1_of(labels, preds));
    }
}

TEST_CASE("best F1 examples") {
    const auto r = best_f1(std::vector<double>{0.1, 0.9, 0.2}, std::vector<int>{0, 1, 0}, false);
    CHECK(r.threshold == 0.9);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);

    const auto flat = best_f1(std::vector<double>(5, 0.3), std::vector<int>{1, 0, 1, 0, 0}, false);
    CHECK(flat.threshold == 0.3);
    CHECK(flat.f1 == doctest::Approx(4.0 / 7.0).epsilon(1e-15));

    // Thresholds 4 and 1 both reach 2/3; the larger wins.
    const auto tie = best_f1(std::vector<double>{1, 2, 3, 4}, std::vector<int>{1, 0, 0, 1}, false);
    CHECK(tie.threshold == 4.0);
    CHECK(tie.f1 == doctest::Approx(2.0 / 3.0));

    CHECK_THROWS_AS(best_f1(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}, false), ArgumentError);
}

TEST_CASE("best F1 equals brute force over distinct scores") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 200;
        auto scores = random_vector(rng, n, 0.0, 1.0);
        if (trial % 3 == 0) {
            for (auto& s : scores) {
                s = std::round(s * 20) / 20;  // plenty of ties
            }
        }
        const auto labels = random_labels(rng, n);
        for (bool adjust : {false, true}) {
            const auto fast = best_f1(scores, labels, adjust);
            const auto brute = best_f1_brute(scores, labels, adjust);
            CHECK(fast.f1 == doctest::Approx(brute.f1).epsilon(1e-15));
            CHECK(fast.threshold == brute.threshold);
            const auto again = evaluate_threshold(scores, labels, fast.threshold, adjust);
            CHECK(again.f1 == doctest::Approx(fast.f1).epsilon(1e-15));
            CHECK(again.tp + again.fp + again.fn + again.tn == n);
        }
    }
}

TEST_CASE("best F1 agrees with a dense threshold grid") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 200;
        std::vector<double> scores(n);
        for (auto& s : scores) {
            s = static_cast<double>(rng.uniform_int(0, 9999)) / 10000.0;  // on the grid
        }
        const auto labels = random_labels(rng, n);
        double grid_best = 0.0;
        for (int g = 0; g < 10000; ++g) {
            grid_best = std::max(grid_best, evaluate_threshold(scores, labels, g / 10000.0, true).f1);
        }
        CHECK(best_f1(scores, labels, true).f1 == doctest::Approx(grid_best).epsilon(1e-15));
    }
}

TEST_CASE("deviation report edge cases") {
    // Every segment repeats the same values, so consecutive graphs are identical.
    const std::size_t w = 4;
    LabeledSeries s;
    s.values = Tensor({3, 40});
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t t = 0; t < 40; ++t) {
            s.values.at(i, t) = static_cast<double>((t % w) * (i + 1));
        }
    }
    std::vector<int> labels(40, 0);
    for (std::size_t t = 20; t < 24; ++t) {
        labels[t] = 1;
    }
    s.labels = labels;
    GraphCache cache(3, w, 1.0);
    const auto report = deviation_report(s, cache);
    REQUIRE(report.has_abnormal());
    CHECK(report.abnormal_transitions == 1);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(report.normal[i] == 0.0);
        CHECK(report.abnormal[i] == 0.0);
    }
    CHECK(report.fraction_abnormal_larger() == 0.0);

    s.labels = std::vector<int>(40, 0);
    const auto clean = deviation_report(s, cache);
    CHECK_FALSE(clean.has_abnormal());
    CHECK(clean.abnormal.empty());
    s.labels.reset();
    CHECK_THROWS_AS(deviation_report(s, cache), ArgumentError);
}

TEST_CASE("scores are stored one step after the window end") {
    const auto config = tiny_config();
    auto p = make_tiny_problem(config);
    Model model(config.model_config(p.num_series()), 4);
    const auto scores = score(model, p.series, *p.cache, 7);
    const std::size_t c = config.m * config.w;
    REQUIRE(scores.length() == p.series.length());
    CHECK(scores.first_valid() == c);
    for (std::size_t t = 0; t < scores.length(); ++t) {
        CHECK(static_cast<bool>(scores.valid[t]) == (t >= c));
        CHECK(scores.combined_mean[t] <= std::min(scores.ts_mean[t], scores.graph_mean[t]) + 1e-15);
    }
    CHECK(scores.valid_scores().size() == scores.length() - c);

    // Direct evaluation of the window ending at 40.
    const auto windows = make_windows(p.series, config.m, config.w, 1);
    const auto it = std::find_if(windows.begin(), windows.end(), [](const auto& wnd) { return wnd.end_index == 40; });
    const std::vector<std::size_t> idx{static_cast<std::size_t>(it - windows.begin())};
    const Batch batch = make_batch(windows, idx, config.m, config.w, *p.cache);
    const auto fwd = model.forward(batch, NormMode::Eval);
    double ts = 0.0;
    for (std::size_t i = 0; i < p.num_series(); ++i) {
        const double diff = p.series.at(i, 41) - fwd.y_hat.value().at(0, i);
        ts += diff * diff;
    }
    CHECK(scores.ts_mean[41] == doctest::Approx(ts / static_cast<double>(p.num_series())).epsilon(1e-13));

    TempDir dir;
    write_scores(dir / "s.csv", scores, std::vector<int>(scores.length(), 0));
    CHECK_THROWS_AS(write_scores(dir / "s.csv", scores, std::vector<int>(3, 0)), ArgumentError);
}

} // TEST_SUITE
