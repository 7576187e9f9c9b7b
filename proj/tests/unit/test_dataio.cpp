#include "dygraph/dataio.hpp"
#include "dygraph/errors.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <fstream>

using namespace dygraph;

namespace {

LabeledSeries row_series(std::vector<double> values, std::optional<std::vector<int>> labels = {}) {
    LabeledSeries s;
    const std::size_t n = values.size();
    s.values = Tensor({1, n}, std::move(values));
    s.labels = std::move(labels);
    s.series_names = {"x"};
    return s;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

} // namespace

TEST_SUITE("dataio") {

TEST_CASE("csv without a label column keeps every column as a series") {
    TempDir dir;
    write_file(dir / "a.csv", "a,b,c\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n");
    const auto s = load_csv(dir / "a.csv");
    CHECK(s.num_series() == 3);
    CHECK(s.length() == 5);
    CHECK_FALSE(s.labels.has_value());
    CHECK(s.series_names == std::vector<std::string>{"a", "b", "c"});
    CHECK(s.at(1, 3) == 11.0);
}

TEST_CASE("all-zero label column") {
    TempDir dir;
    write_file(dir / "a.csv", "x,y,attack\n1,2,0\n3,4,0\n5,6,0\n7,8,0\n9,10,0\n");
    const auto s = load_csv(dir / "a.csv", std::string("attack"));
    REQUIRE(s.labels.has_value());
    CHECK(*s.labels == std::vector<int>(5, 0));
    CHECK(s.num_series() == 2);
}

TEST_CASE("load errors name the offending row and column") {
    TempDir dir;
    write_file(dir / "nan.csv", "a,b\n1,2\n3,nan\n");
    try {
        load_csv(dir / "nan.csv");
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("'b'") != std::string::npos);
    }
    write_file(dir / "ragged.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_AS(load_csv(dir / "ragged.csv"), LoadError);
    write_file(dir / "word.csv", "a,b\n1,x\n");
    CHECK_THROWS_AS(load_csv(dir / "word.csv"), LoadError);
    CHECK_THROWS_AS(load_csv(dir / "missing.csv"), LoadError);
    write_file(dir / "lab.csv", "a,l\n1,2\n");
    CHECK_THROWS_AS(load_csv(dir / "lab.csv", std::string("l")), LoadError);
    CHECK_THROWS_AS(load_csv(dir / "lab.csv", std::string("nope")), LoadError);
}

TEST_CASE("csv round trip is exact") {
    TempDir dir;
    LabeledSeries s;
    s.values = Tensor({2, 3}, {0.1, 1.0 / 3.0, -2.5e-17, 7.0, 1e300, -0.0});
    s.labels = std::vector<int>{0, 1, 0};
    s.series_names = {"p", "q"};
    write_csv(dir / "rt.csv", s);
    const auto back = load_csv(dir / "rt.csv", std::string("label"));
    CHECK(back.values == s.values);
    CHECK(*back.labels == *s.labels);
}

TEST_CASE("median down-sampling") {
    CHECK(downsample_median(row_series({1, 2, 3, 4, 5, 6}), 2).values.storage() == std::vector<double>{1.5, 3.5, 5.5});
    const auto same = row_series({3, 1, 2});
    CHECK(downsample_median(same, 1).values == same.values);
    const auto labeled = downsample_median(row_series({0, 0, 0, 0}, std::vector<int>{0, 1, 0, 0}), 2);
    CHECK(*labeled.labels == std::vector<int>{1, 0});
    // Ragged final block takes the median of what is there.
    CHECK(downsample_median(row_series({1, 5, 9, 2, 4}), 3).values.storage() == std::vector<double>{5, 3});
    CHECK_THROWS_AS(downsample_median(same, 0), ArgumentError);
}

TEST_CASE("min-max normalization") {
    const auto s = row_series({2, 4, 6});
    CHECK(minmax_normalize(s, compute_norm_stats(s)).values.storage() == std::vector<double>{0, 0.5, 1});
    const auto flat = row_series({3, 3, 3});
    CHECK(minmax_normalize(flat, compute_norm_stats(flat)).values.storage() == std::vector<double>{0, 0, 0});
    const auto test = row_series({8});
    CHECK(minmax_normalize(test, compute_norm_stats(s)).values[0] == doctest::Approx(1.5));
    NormStats wrong;
    CHECK_THROWS_AS(minmax_normalize(s, wrong), ArgumentError);
}

TEST_CASE("norm stats persist bit-exactly") {
    TempDir dir;
    NormStats stats{{0.1, -1.0 / 3.0}, {0.7, 2.0 / 3.0}};
    save_norm_stats(dir / "n.json", stats);
    const auto back = load_norm_stats(dir / "n.json");
    CHECK(back.min == stats.min);
    CHECK(back.max == stats.max);
}

TEST_CASE("windowing boundaries") {
    LabeledSeries s = row_series(std::vector<double>(31, 0.0));
    auto w = make_windows(s, 6, 5);
    REQUIRE(w.size() == 2);
    CHECK(w[0].end_index == 29);
    CHECK(w[0].has_target());
    CHECK(w[1].end_index == 30);
    CHECK_FALSE(w[1].has_target());

    auto exact = make_windows(row_series(std::vector<double>(30, 0.0)), 6, 5);
    REQUIRE(exact.size() == 1);
    CHECK_FALSE(exact[0].has_target());

    auto small = make_windows(row_series({0, 1, 2, 3, 4, 5}), 2, 3);
    REQUIRE(small.size() == 1);
    CHECK(small[0].end_index == 5);
    CHECK(small[0].segment_bounds == std::vector<std::pair<std::size_t, std::size_t>>{{0, 2}, {3, 5}});

    CHECK_THROWS_AS(make_windows(row_series({1, 2}), 2, 3), ArgumentError);
    CHECK_THROWS_AS(make_windows(s, 6, 5, 0), ArgumentError);
}

TEST_CASE("window contents and strides") {
    std::vector<double> v(20);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<double>(i);
    }
    const auto w = make_windows(row_series(v), 2, 2, 3);
    REQUIRE(w.size() == 6);
    CHECK(w[1].end_index == 6);
    CHECK(w[1].window.storage() == std::vector<double>{3, 4, 5, 6});
    CHECK((*w[1].target)[0] == 7.0);
}

TEST_CASE("contiguous train/validation split") {
    auto make = [](std::size_t n) {
        std::vector<WindowSample> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            v[i].end_index = i;
        }
        return v;
    };
    auto [tr, va] = train_val_split(make(10), 0.2);
    CHECK(tr.size() == 8);
    REQUIRE(va.size() == 2);
    CHECK(va[0].end_index == 8);

    auto [tr3, va3] = train_val_split(make(3), 0.5);
    CHECK(tr3.size() == 2);
    CHECK(va3.size() == 1);

    auto [tr100, va100] = train_val_split(make(100), 0.2);
    CHECK(va100.front().end_index == 80);
    CHECK(va100.back().end_index == 99);

    CHECK_THROWS_AS(train_val_split(make(10), 0.0), ArgumentError);
    CHECK_THROWS_AS(train_val_split(make(1), 0.5), ArgumentError);
}

} // TEST_SUITE
