#include "dygraph/encoder.hpp"
#include "dygraph/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace dygraph;
using namespace dygraph::testing;
namespace ad = dygraph::ad;

namespace {

ModelConfig small_config(std::size_t n, std::size_t d) {
    ModelConfig c;
    c.num_series = n;
    c.d = d;
    c.m = 3;
    c.w = 4;
    c.mixhop_depth = 2;
    c.mixhop_beta = 0.05;
    return c;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Dense mix-hop evaluation for one batch entry: z[d][N][w], adjacency[N][N].
Tensor mixhop_oracle(const Tensor& z, const Tensor& adjacency, const EncoderParams& params, double beta) {
    const std::size_t d = z.dim(1), n = z.dim(2), w = z.dim(3);
    std::vector<double> p(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += adjacency.at(i, j) + (i == j ? 1.0 : 0.0);
        }
        for (std::size_t j = 0; j < n; ++j) {
            p[i * n + j] = (adjacency.at(i, j) + (i == j ? 1.0 : 0.0)) / row;
        }
    }
    auto idx = [&](std::size_t c, std::size_t i, std::size_t t) { return (c * n + i) * w + t; };
    std::vector<double> h(z.storage());
    Tensor out({1, d, n, w});
    auto accumulate = [&](const Tensor& weight) {
        for (std::size_t co = 0; co < d; ++co)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t t = 0; t < w; ++t) {
                    double s = 0.0;
                    for (std::size_t ci = 0; ci < d; ++ci) {
                        s += weight.at(co, ci) * h[idx(ci, i, t)];
                    }
                    out[idx(co, i, t)] += s;
                }
    };
    accumulate(params.hop_weight[0].value());
    for (std::size_t k = 1; k < params.hop_weight.size(); ++k) {
        std::vector<double> next(h.size());
        for (std::size_t c = 0; c < d; ++c)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t t = 0; t < w; ++t) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        s += p[i * n + j] * h[idx(c, j, t)];
                    }
                    next[idx(c, i, t)] = beta * z[idx(c, i, t)] + (1 - beta) * s;
                }
        h = next;
        accumulate(params.hop_weight[k].value());
    }
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < w; ++t) {
                out[idx(c, i, t)] += params.hop_bias.value()[c];
            }
    return out;
}

} // namespace

TEST_SUITE("encoder") {

TEST_CASE("initial representation is a per-channel affine map") {
    Rng rng(1);
    auto params = EncoderParams::init(small_config(1, 2), rng);
    params.init_weight.mutable_value() = Tensor({2}, {2.0, -1.0});
    params.init_bias.mutable_value() = Tensor({2}, {0.5, 0.0});
    const auto c = init_rep(ad::Var::constant(Tensor({1, 1, 3}, {1.0, 2.0, -3.0})), params);
    CHECK(c.shape() == Shape{1, 2, 1, 3});
    CHECK(c.value().storage() == std::vector<double>{2.5, 4.5, -5.5, -1.0, -2.0, 3.0});
    CHECK_THROWS_AS(init_rep(ad::Var::constant(Tensor({3, 3})), params), ArgumentError);
}

TEST_CASE("static graph with a zero scoring layer is one half everywhere") {
    Rng rng(2);
    auto params = EncoderParams::init(small_config(5, 4), rng);
    params.fa_fc2_weight.mutable_value().fill(0.0);
    params.fa_fc2_bias.mutable_value().fill(0.0);
    const auto q = static_graph(params);
    CHECK(q.shape() == Shape{5, 5});
    for (double v : q.value().values()) {
        CHECK(v == 0.5);
    }
}

TEST_CASE("static graph is symmetric and in (0, 1)") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto params = EncoderParams::init(small_config(6, 5), rng);
        params.fa_fc1_bias.mutable_value() = random_tensor(rng, {5});
        params.fa_fc2_bias.mutable_value() = random_tensor(rng, {1});
        const Tensor q = static_graph(params).value();
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t j = 0; j < 6; ++j) {
                CHECK(q.at(i, j) == doctest::Approx(q.at(j, i)).epsilon(1e-15));
                CHECK(q.at(i, j) > 0.0);
                CHECK(q.at(i, j) < 1.0);
            }
        }
    }
}

TEST_CASE("static graph matches direct evaluation for two nodes") {
    Rng rng(4);
    const std::size_t d = 3;
    auto params = EncoderParams::init(small_config(2, d), rng);
    params.fa_fc1_bias.mutable_value() = random_tensor(rng, {d});
    params.fa_fc2_bias.mutable_value() = random_tensor(rng, {1});
    const Tensor& xi = params.node_embed.value();
    const Tensor& w1 = params.fa_fc1_weight.value();
    const Tensor& w2 = params.fa_fc2_weight.value();
    auto f_a = [&](std::size_t i, std::size_t j) {
        double out = params.fa_fc2_bias.value()[0];
        for (std::size_t r = 0; r < d; ++r) {
            double pre = params.fa_fc1_bias.value()[r];
            for (std::size_t k = 0; k < d; ++k) {
                pre += w1.at(r, k) * xi.at(i, k) + w1.at(r, d + k) * xi.at(j, k);
            }
            out += w2.at(0, r) * std::tanh(pre);
        }
        return out;
    };
    const Tensor q = static_graph(params).value();
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(q.at(i, j) == doctest::Approx(sigmoid(0.5 * (f_a(i, j) + f_a(j, i)))).epsilon(1e-12));
        }
    }
}

TEST_CASE("gate logits start at zero") {
    Rng rng(5);
    const auto params = EncoderParams::init(small_config(4, 4), rng);
    for (double v : params.w1.value().values()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("blend limits") {
    Rng rng(6);
    const auto q = ad::Var::constant(random_tensor(rng, {3, 3}, 0.0, 1.0));
    const auto a = ad::Var::constant(random_tensor(rng, {2, 3, 3}, 0.0, 1.0));
    const Tensor to_q = blend_adjacency(q, a, ad::Var::constant(Tensor({3, 3}, 60.0))).value();
    const Tensor to_a = blend_adjacency(q, a, ad::Var::constant(Tensor({3, 3}, -60.0))).value();
    const Tensor half = blend_adjacency(q, a, ad::Var::constant(Tensor({3, 3}, 0.0))).value();
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(to_q.at(b, i, j) == doctest::Approx(q.value().at(i, j)).epsilon(1e-12));
                CHECK(to_a.at(b, i, j) == doctest::Approx(a.value().at(b, i, j)).epsilon(1e-12));
                CHECK(half.at(b, i, j) ==
                      doctest::Approx(0.5 * (q.value().at(i, j) + a.value().at(b, i, j))));
            }
        }
    }
}

TEST_CASE("mix-hop matches a dense evaluation") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 4, n = 3;
        auto params = EncoderParams::init(small_config(n, d), rng);
        params.hop_bias.mutable_value() = random_tensor(rng, {d});
        const Tensor z = random_tensor(rng, {1, d, n, 4});
        const Tensor a = random_tensor(rng, {n, n}, 0.0, 1.0);
        const Tensor got = mixhop_conv(ad::Var::constant(z), ad::Var::constant(a), params, 0.05).value();
        const Tensor want = mixhop_oracle(z, a, params, 0.05);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("mix-hop with identity hop zero and no further hops returns its input") {
    Rng rng(8);
    const std::size_t d = 3;
    auto params = EncoderParams::init(small_config(4, d), rng);
    params.hop_weight[0].mutable_value() = Tensor({d, d}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    for (std::size_t k = 1; k < params.hop_weight.size(); ++k) {
        params.hop_weight[k].mutable_value().fill(0.0);
    }
    const Tensor z = random_tensor(rng, {2, d, 4, 4});
    const Tensor out =
        mixhop_conv(ad::Var::constant(z), ad::Var::constant(random_tensor(rng, {4, 4}, 0.0, 1.0)), params, 0.05)
            .value();
    CHECK(out == z);
}

TEST_CASE("mix-hop without edges keeps nodes separate") {
    Rng rng(9);
    const std::size_t d = 3, n = 4;
    const auto params = EncoderParams::init(small_config(n, d), rng);
    const auto empty = ad::Var::constant(Tensor({n, n}, 0.0));
    Tensor z = random_tensor(rng, {1, d, n, 4});
    const Tensor before = mixhop_conv(ad::Var::constant(z), empty, params, 0.05).value();
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t t = 0; t < 4; ++t) {
            z[(c * n + 2) * 4 + t] += 1.0;  // node 2 only
        }
    }
    const Tensor after = mixhop_conv(ad::Var::constant(z), empty, params, 0.05).value();
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t t = 0; t < 4; ++t) {
                const std::size_t k = (c * n + i) * 4 + t;
                if (i == 2) {
                    continue;
                }
                CHECK(after[k] == before[k]);
            }
        }
    }
}

TEST_CASE("inception output at time t ignores later inputs") {
    Rng rng(10);
    const auto config = small_config(2, 3);
    const auto params = EncoderParams::init(config, rng);
    Tensor x = random_tensor(rng, {1, 2, 12});
    const Tensor before = dilated_inception(init_rep(ad::Var::constant(x), params), params).value();
    x[1 * 12 + 8] += 5.0;
    const Tensor after = dilated_inception(init_rep(ad::Var::constant(x), params), params).value();
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t t = 0; t < 8; ++t) {
                const std::size_t k = (c * 2 + i) * 12 + t;
                CHECK(after[k] == before[k]);
            }
        }
    }
    CHECK_THROWS_AS(dilated_inception(init_rep(ad::Var::constant(Tensor({1, 2, 6})), params), params), ConfigError);
}

TEST_CASE("encode shapes and propagation count") {
    Rng rng(11);
    const auto config = small_config(3, 4);
    const auto params = EncoderParams::init(config, rng);
    const auto windows = ad::Var::constant(random_tensor(rng, {2, 3, 12}));
    std::vector<ad::Var> graphs;
    for (std::size_t s = 0; s < 3; ++s) {
        graphs.push_back(ad::Var::constant(random_tensor(rng, {2, 3, 3}, 0.0, 1.0)));
    }
    const auto out = encode(windows, graphs, params, config, 2);
    CHECK(out.c.shape() == Shape{2, 4, 3, 12});
    CHECK(out.z.shape() == Shape{2, 4, 3, 12});
    CHECK(out.z_segments.size() == 3);
    REQUIRE(out.hidden.size() == 2);
    CHECK(out.hidden[1].shape() == Shape{2, 4, 3, 4});
    CHECK(encode(windows, graphs, params, config, 0).hidden.empty());
    CHECK_THROWS_AS(encode(windows, graphs, params, config, 4), ArgumentError);
    CHECK_THROWS_AS(encode(ad::Var::constant(Tensor({2, 3, 10})), graphs, params, config, 1), ArgumentError);
}

} // TEST_SUITE
