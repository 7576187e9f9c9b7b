#include "dygraph/errors.hpp"
#include "dygraph/graphs.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace dygraph;
using namespace dygraph::testing;

namespace {

LabeledSeries random_series(Rng& rng, std::size_t n, std::size_t steps) {
    LabeledSeries s;
    s.values = random_tensor(rng, {n, steps}, 0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        s.series_names.push_back("s" + std::to_string(i));
    }
    return s;
}

} // namespace

TEST_SUITE("graphs") {

TEST_CASE("dtw_sq fixed values") {
    const std::vector<double> a{0, 0, 1};
    const std::vector<double> b{0, 1, 1};
    CHECK(dtw_sq(a, a) == 0.0);
    CHECK(dtw_sq(a, b) == 0.0);
    CHECK(dtw_sq(std::vector<double>{0, 1}, std::vector<double>{2, 3}) == 8.0);
    CHECK_THROWS_AS(dtw_sq(std::vector<double>{}, std::vector<double>{}), ArgumentError);
    CHECK_THROWS_AS(dtw_sq(a, std::vector<double>{1}), ArgumentError);
}

TEST_CASE("dtw_sq matches path enumeration on integer inputs") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto len = static_cast<std::size_t>(rng.uniform_int(1, 6));
        const auto a = random_integer_vector(rng, len, -4, 4);
        const auto b = random_integer_vector(rng, len, -4, 4);
        CHECK(dtw_sq(a, b) == dtw_sq_enumerate(a, b));
    }
}

TEST_CASE("dtw_sq is symmetric and bounded by the diagonal path") {
    Rng rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        const auto len = static_cast<std::size_t>(rng.uniform_int(1, 12));
        const auto a = random_vector(rng, len);
        const auto b = random_vector(rng, len);
        double diagonal = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            diagonal += (a[i] - b[i]) * (a[i] - b[i]);
        }
        CHECK(dtw_sq(a, b) == dtw_sq(b, a));
        CHECK(dtw_sq(a, b) <= diagonal);
        CHECK(dtw_sq(a, b) >= 0.0);
    }
}

TEST_CASE("a band wide enough to cover the matrix changes nothing; a narrow band can only cost more") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_vector(rng, 8);
        const auto b = random_vector(rng, 8);
        CHECK(dtw_sq(a, b, 8) == dtw_sq(a, b));
        CHECK(dtw_sq(a, b, 1) >= dtw_sq(a, b));
    }
}

TEST_CASE("correlation graph fixed values") {
    const Tensor same({3, 4}, 0.25);
    const auto ones = correlation_graph(same, 1.0);
    for (double v : ones.adjacency.values()) {
        CHECK(v == 1.0);
    }
    const Tensor rows({2, 2}, {0, 1, 2, 3});
    CHECK(correlation_graph(rows, 1.0).adjacency.at(0, 1) == std::exp(-8.0));
    CHECK(correlation_graph(rows, 1.0).adjacency.at(0, 1) == doctest::Approx(3.3546e-4).epsilon(1e-4));
    CHECK(correlation_graph(rows, 5.0).adjacency.at(1, 0) == doctest::Approx(0.2019).epsilon(1e-3));
}

TEST_CASE("graph invariants on random windows") {
    Rng rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 7));
        const auto w = static_cast<std::size_t>(rng.uniform_int(1, 6));
        const Tensor seg = random_tensor(rng, {n, w}, 0.0, 1.0);
        const auto g05 = correlation_graph(seg, 0.5).adjacency;
        const auto g1 = correlation_graph(seg, 1.0).adjacency;
        const auto g5 = correlation_graph(seg, 5.0).adjacency;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(g1.at(i, i) == 1.0);
            for (std::size_t j = 0; j < n; ++j) {
                CHECK(g1.at(i, j) == g1.at(j, i));
                CHECK(g1.at(i, j) > 0.0);
                CHECK(g1.at(i, j) <= 1.0);
                CHECK(g05.at(i, j) <= g1.at(i, j));
                CHECK(g1.at(i, j) <= g5.at(i, j));
            }
        }
    }
}

TEST_CASE("sequence alignment follows the window end") {
    Rng rng(15);
    const auto series = random_series(rng, 3, 40);
    const auto samples = make_windows(series, 3, 4);
    const auto& sample = samples[5];  // ends at 11 + 5 = 16
    REQUIRE(sample.end_index == 16);
    const auto seq = build_sequence(sample, 3, 4, 1.0, nullptr);
    REQUIRE(seq.graphs.size() == 3);
    for (std::size_t s = 0; s < 3; ++s) {
        const std::size_t end = 16 - 12 + (s + 1) * 4;
        CHECK(seq.graphs[s]->window_end == end);
        CHECK(seq.graphs[s]->adjacency == correlation_graph(series_segment(series, end, 4), 1.0).adjacency);
    }
}

TEST_CASE("constant sample gives all-ones graphs") {
    LabeledSeries s;
    s.values = Tensor({2, 4}, 0.5);
    const auto samples = make_windows(s, 2, 2);
    const auto seq = build_sequence(samples[0], 2, 2, 1.0, nullptr);
    REQUIRE(seq.graphs.size() == 2);
    for (const auto& g : seq.graphs) {
        for (double v : g->adjacency.values()) {
            CHECK(v == 1.0);
        }
    }
}

TEST_CASE("samples w apart share m - 1 graphs through the cache") {
    Rng rng(16);
    const auto series = random_series(rng, 4, 60);
    const std::size_t m = 4, w = 3;
    const auto samples = make_windows(series, m, w);
    GraphCache cache(4, w, 1.0);
    build_sequence(samples[0], m, w, 1.0, &cache);
    const std::size_t hits_before = cache.hits();
    build_sequence(samples[w], m, w, 1.0, &cache);
    CHECK(cache.hits() - hits_before == m - 1);
}

TEST_CASE("cache transparency over a stride-1 sweep") {
    Rng rng(17);
    const std::size_t steps = 120, m = 4, w = 5;
    const auto series = random_series(rng, 5, steps);
    GraphCache cache(5, w, 0.7);
    for (const auto& sample : make_windows(series, m, w)) {
        const auto cached = build_sequence(sample, m, w, 0.7, &cache);
        const auto fresh = build_sequence(sample, m, w, 0.7, nullptr);
        for (std::size_t s = 0; s < m; ++s) {
            CHECK(cached.graphs[s]->adjacency == fresh.graphs[s]->adjacency);
        }
    }
    CHECK(cache.misses() <= steps - w + 1);
    CHECK(cache.size() == cache.misses());
}

TEST_CASE("bounded cache still serves correct graphs") {
    Rng rng(18);
    const auto series = random_series(rng, 3, 50);
    GraphCache cache(3, 4, 1.0, 5);
    for (const auto& sample : make_windows(series, 3, 4)) {
        const auto cached = build_sequence(sample, 3, 4, 1.0, &cache);
        const auto fresh = build_sequence(sample, 3, 4, 1.0, nullptr);
        for (std::size_t s = 0; s < 3; ++s) {
            CHECK(cached.graphs[s]->adjacency == fresh.graphs[s]->adjacency);
        }
    }
    CHECK(cache.size() <= 5);
}

TEST_CASE("populate_cache matches per-window construction") {
    Rng rng(19);
    const auto series = random_series(rng, 4, 30);
    GraphCache cache(4, 5, 1.0);
    populate_cache(series, cache, 7);
    CHECK(cache.size() == 26);
    for (std::size_t end = 4; end < 30; ++end) {
        CHECK(cache.find(end)->adjacency == correlation_graph(series_segment(series, end, 5), 1.0).adjacency);
    }
}

TEST_CASE("node weight deviation") {
    CorrelationGraph ones{Tensor({3, 3}, 1.0)};
    CorrelationGraph eye{Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1})};
    const std::vector<CorrelationGraph> same{ones, ones, ones};
    const Tensor flat = node_weight_deviation(same);
    for (double v : flat.values()) {
        CHECK(v == 0.0);
    }
    const std::vector<CorrelationGraph> change{ones, eye};
    const Tensor dev = node_weight_deviation(change);
    CHECK(dev.shape() == Shape{3, 1});
    for (double v : dev.values()) {
        CHECK(v == 2.0);
    }
    const std::vector<CorrelationGraph> single{ones};
    CHECK_THROWS_AS(node_weight_deviation(single), ArgumentError);
}

TEST_CASE("graph store round trip and header checks") {
    Rng rng(20);
    TempDir dir;
    const auto series = random_series(rng, 3, 25);
    GraphCache cache(3, 5, 0.5);
    populate_cache(series, cache);
    save_graph_store(dir / "g.bin", store_from_cache(cache));
    const auto store = load_graph_store(dir / "g.bin");
    CHECK(store.num_series == 3);
    CHECK(store.w == 5);
    CHECK(store.tau == 0.5);
    CHECK(store.graphs.size() == 21);

    GraphCache again(3, 5, 0.5);
    fill_cache_from_store(store, again);
    for (std::size_t end = 4; end < 25; ++end) {
        CHECK(again.find(end)->adjacency == cache.find(end)->adjacency);
    }
    GraphCache other_tau(3, 5, 1.0);
    CHECK_THROWS_AS(fill_cache_from_store(store, other_tau), ArgumentError);

    {
        std::ofstream out(dir / "short.bin", std::ios::binary);
        out << "abc";
    }
    CHECK_THROWS_AS(load_graph_store(dir / "short.bin"), LoadError);
}

} // TEST_SUITE
