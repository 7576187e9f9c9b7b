#include "dygraph/errors.hpp"
#include "dygraph/synthetic.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <fstream>

using namespace dygraph;
using namespace dygraph::testing;

namespace {

SynthSpec small_spec(std::size_t breaks, std::size_t spikes) {
    SynthSpec s;
    s.num_series = 4;
    s.train_length = 600;
    s.test_length = 1200;
    s.breaks = breaks;
    s.spikes = spikes;
    return s;
}

} // namespace

TEST_SUITE("synthetic") {

TEST_CASE("generation is deterministic in the seed") {
    const auto a = generate(small_spec(2, 2));
    const auto b = generate(small_spec(2, 2));
    CHECK(a.train.values == b.train.values);
    CHECK(a.test.values == b.test.values);
    CHECK(*a.test.labels == *b.test.labels);
    auto other = small_spec(2, 2);
    other.seed = 1;
    CHECK_FALSE(generate(other).test.values == a.test.values);
}

TEST_CASE("no anomalies means all-zero labels") {
    const auto d = generate(small_spec(0, 0));
    CHECK(d.anomalies.empty());
    CHECK(std::all_of(d.test.labels->begin(), d.test.labels->end(), [](int v) { return v == 0; }));
}

TEST_CASE("label runs match the anomaly records") {
    const auto d = generate(small_spec(2, 3));
    REQUIRE(d.anomalies.size() == 5);
    const auto runs = label_runs(*d.test.labels);
    REQUIRE(runs.size() == 5);
    std::size_t breaks = 0;
    for (std::size_t k = 0; k < 5; ++k) {
        const auto& a = d.anomalies[k];
        CHECK(runs[k].first == a.start);
        CHECK(runs[k].second == a.start + a.length - 1);
        CHECK(a.start >= d.spec.window);
        if (k > 0) {
            const auto& prev = d.anomalies[k - 1];
            CHECK(a.start >= prev.start + prev.length + 2 * d.spec.window);
        }
        breaks += a.kind == "correlation_break";
    }
    CHECK(breaks == 2);
}

TEST_CASE("training split is clean and named") {
    const auto d = generate(small_spec(2, 3));
    REQUIRE(d.train.labels.has_value());
    CHECK(std::all_of(d.train.labels->begin(), d.train.labels->end(), [](int v) { return v == 0; }));
    CHECK(d.train.series_names.size() == 4);
    CHECK(d.train.length() == 600);
    CHECK(d.test.length() == 1200);
}

TEST_CASE("spikes stand well above the series") {
    const auto d = generate(small_spec(0, 3));
    for (const auto& a : d.anomalies) {
        REQUIRE(a.kind == "spike");
        CHECK(std::abs(a.magnitude) > 3.0 * 0.05);
    }
}

TEST_CASE("manifest lists every anomaly") {
    TempDir dir;
    const auto d = generate(small_spec(2, 3));
    save_manifest(dir / "anomalies.json", d);
    std::ifstream in(dir / "anomalies.json");
    const auto doc = nlohmann::json::parse(in);
    CHECK(doc.dump().find("correlation_break") != std::string::npos);
    CHECK(doc.dump().find("spike") != std::string::npos);
}

TEST_CASE("invalid specs are configuration errors") {
    CHECK_THROWS_AS(generate(small_spec(40, 40)), ConfigError);
    auto s = small_spec(1, 1);
    s.num_series = 1;
    CHECK_THROWS_AS(generate(s), ConfigError);
    s = small_spec(1, 1);
    s.onset_jump = -1.0;
    CHECK_THROWS_AS(generate(s), ConfigError);
    s = small_spec(1, 1);
    s.spike_min = 0;
    CHECK_THROWS_AS(generate(s), ConfigError);
}

} // TEST_SUITE
