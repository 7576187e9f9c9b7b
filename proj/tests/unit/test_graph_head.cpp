#include "dygraph/errors.hpp"
#include "dygraph/graph_head.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace dygraph;
using namespace dygraph::testing;
namespace ad = dygraph::ad;

namespace {

ModelConfig head_config(std::size_t n, std::size_t d, std::size_t m) {
    ModelConfig c;
    c.num_series = n;
    c.d = d;
    c.m = m;
    c.w = 3;
    c.layers = 2;
    c.heads = 2;
    return c;
}

std::vector<ad::Var> random_states(Rng& rng, std::size_t count, std::size_t b, std::size_t d, std::size_t n,
                                   std::size_t w) {
    std::vector<ad::Var> out;
    for (std::size_t s = 0; s < count; ++s) {
        out.push_back(ad::Var::constant(random_tensor(rng, {b, d, n, w})));
    }
    return out;
}

void zero_block(TransformerBlock& b) {
    for (ad::Var* v : {&b.o_weight, &b.o_bias, &b.ff2_weight, &b.ff2_bias}) {
        v->mutable_value().fill(0.0);
    }
}

} // namespace

TEST_SUITE("graph_head") {

TEST_CASE("pooling averages each state over time, node-major") {
    Rng rng(1);
    const auto states = random_states(rng, 3, 2, 4, 5, 3);
    const Tensor p = pool_states(states).value();
    REQUIRE(p.shape() == Shape{2, 5, 3, 4});
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t s = 0; s < 3; ++s)
                for (std::size_t c = 0; c < 4; ++c) {
                    const Tensor& h = states[s].value();
                    double mean = 0.0;
                    for (std::size_t t = 0; t < 3; ++t) {
                        mean += h[((b * 4 + c) * 5 + i) * 3 + t];
                    }
                    CHECK(p[((b * 5 + i) * 3 + s) * 4 + c] == doctest::Approx(mean / 3).epsilon(1e-14));
                }

    const std::vector<ad::Var> flat{ad::Var::constant(Tensor({1, 2, 3, 4}, 0.7))};
    const Tensor pooled_flat = pool_states(flat).value();
    for (double v : pooled_flat.values()) {
        CHECK(v == doctest::Approx(0.7));
    }
    CHECK_THROWS_AS(pool_states({}), ConfigError);
}

TEST_CASE("sequence features at a position ignore later positions") {
    Rng rng(2);
    const auto config = head_config(3, 4, 5);
    const auto params = GraphHeadParams::init(config, rng);
    Tensor pooled = random_tensor(rng, {2, 3, 4, 4});
    const Tensor before = sequence_features(ad::Var::constant(pooled), params, 2).value();
    for (std::size_t c = 0; c < 4; ++c) {
        pooled[((1 * 3 + 2) * 4 + 2) * 4 + c] += 3.0;  // batch 1, node 2, position 2
    }
    const Tensor after = sequence_features(ad::Var::constant(pooled), params, 2).value();
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t s = 0; s < 4; ++s)
                for (std::size_t c = 0; c < 4; ++c) {
                    const std::size_t k = ((b * 3 + i) * 4 + s) * 4 + c;
                    if (b == 1 && i == 2 && s >= 2) {
                        continue;
                    }
                    CHECK(after[k] == before[k]);
                }
}

TEST_CASE("blocks with zero output projections are the identity") {
    Rng rng(3);
    const auto config = head_config(3, 4, 4);
    auto params = GraphHeadParams::init(config, rng);
    for (auto& b : params.blocks) {
        zero_block(b);
    }
    const Tensor pooled = random_tensor(rng, {2, 3, 3, 4});
    const Tensor o = encode_graph_sequence(ad::Var::constant(pooled), params, 2).value();
    REQUIRE(o.shape() == Shape{2, 3, 4});
    const Tensor& pos = params.pos_embed.value();
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t c = 0; c < 4; ++c) {
                double mean = 0.0;
                for (std::size_t s = 0; s < 3; ++s) {
                    mean += pooled[((b * 3 + i) * 3 + s) * 4 + c] + pos.at(s, c);
                }
                CHECK(o[(b * 3 + i) * 4 + c] == doctest::Approx(mean / 3).epsilon(1e-13));
            }
}

TEST_CASE("decoded graph is a symmetric cosine matrix with unit diagonal") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto config = head_config(5, 6, 3);
        auto params = GraphHeadParams::init(config, rng);
        params.fd_fc2_bias.mutable_value() = random_tensor(rng, {6});
        const Tensor e = decode_graph(ad::Var::constant(random_tensor(rng, {2, 5, 6})), params, 1e-12).value();
        REQUIRE(e.shape() == Shape{2, 5, 5});
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t j = 0; j < 5; ++j) {
                    const double v = e.at(b, i, j);
                    if (i == j) {
                        CHECK(v == 1.0);
                    }
                    CHECK(v == doctest::Approx(e.at(b, j, i)).epsilon(1e-14));
                    CHECK(std::abs(v) <= 1.0 + 1e-12);
                }
    }
}

TEST_CASE("recent update limits, unit diagonal and convexity") {
    Rng rng(5);
    const std::size_t n = 4;
    Tensor e_t = random_tensor(rng, {2, n, n});
    Tensor a_t = random_tensor(rng, {2, n, n}, 0.0, 1.0);
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            e_t.at(b, i, i) = 1.0;
            a_t.at(b, i, i) = 1.0;
        }
    }
    const auto e = ad::Var::constant(e_t);
    const auto a = ad::Var::constant(a_t);
    const Tensor to_e = recent_update(e, a, ad::Var::constant(Tensor({n, n}, 60.0))).value();
    const Tensor to_a = recent_update(e, a, ad::Var::constant(Tensor({n, n}, -60.0))).value();
    const Tensor mixed = recent_update(e, a, ad::Var::constant(random_tensor(rng, {n, n}, -3.0, 3.0))).value();
    for (std::size_t k = 0; k < e_t.size(); ++k) {
        CHECK(to_e[k] == doctest::Approx(e_t[k]).epsilon(1e-12));
        CHECK(to_a[k] == doctest::Approx(a_t[k]).epsilon(1e-12));
        CHECK(mixed[k] >= std::min(e_t[k], a_t[k]) - 1e-15);
        CHECK(mixed[k] <= std::max(e_t[k], a_t[k]) + 1e-15);
    }
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(mixed.at(b, i, i) == 1.0);
        }
    }
}

TEST_CASE("forecast honours the recent-graph switch") {
    Rng rng(6);
    auto config = head_config(3, 4, 4);
    auto params = GraphHeadParams::init(config, rng);
    const auto states = random_states(rng, 3, 2, 4, 3, 3);
    const auto recent = ad::Var::constant(random_tensor(rng, {2, 3, 3}, 0.0, 1.0));
    const auto blended = forecast_graph(states, recent, params, config);
    CHECK_FALSE(blended.a_hat.value() == blended.e.value());
    config.ablation.wo_recent_graph = true;
    const auto plain = forecast_graph(states, recent, params, config);
    CHECK(plain.a_hat.value() == plain.e.value());
    CHECK_THROWS_AS(forecast_graph(random_states(rng, 2, 2, 4, 3, 3), recent, params, config), ArgumentError);
}

} // TEST_SUITE
