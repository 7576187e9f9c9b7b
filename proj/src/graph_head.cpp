#include "dygraph/graph_head.hpp"

#include "dygraph/errors.hpp"

#include <string>

namespace dygraph {

namespace {

TransformerBlock init_block(std::size_t d, Rng& rng) {
    TransformerBlock b;
    b.ln1_gamma = filled_parameter({d}, 1.0);
    b.ln1_beta = zero_parameter({d});
    b.q_weight = fan_in_parameter({d, d}, d, rng);
    b.q_bias = zero_parameter({d});
    b.k_weight = fan_in_parameter({d, d}, d, rng);
    b.k_bias = zero_parameter({d});
    b.v_weight = fan_in_parameter({d, d}, d, rng);
    b.v_bias = zero_parameter({d});
    b.o_weight = fan_in_parameter({d, d}, d, rng);
    b.o_bias = zero_parameter({d});
    b.ln2_gamma = filled_parameter({d}, 1.0);
    b.ln2_beta = zero_parameter({d});
    b.ff1_weight = fan_in_parameter({4 * d, d}, d, rng);
    b.ff1_bias = zero_parameter({4 * d});
    b.ff2_weight = fan_in_parameter({d, 4 * d}, 4 * d, rng);
    b.ff2_bias = zero_parameter({d});
    return b;
}

} // namespace

GraphHeadParams GraphHeadParams::init(const ModelConfig& config, Rng& rng) {
    const std::size_t d = config.d;
    GraphHeadParams p;
    p.pos_embed = ad::Var::parameter(normal_tensor({config.m - 1, d}, 0.02, rng));
    for (std::size_t l = 0; l < config.layers; ++l) {
        p.blocks.push_back(init_block(d, rng));
    }
    p.fd_fc1_weight = fan_in_parameter({d, d}, d, rng);
    p.fd_fc1_bias = zero_parameter({d});
    p.fd_fc2_weight = fan_in_parameter({d, d}, d, rng);
    p.fd_fc2_bias = zero_parameter({d});
    p.w2 = zero_parameter({config.num_series, config.num_series});
    return p;
}

void GraphHeadParams::collect(std::vector<NamedParam>& out) {
    out.push_back({"graph_head.pos_embed", &pos_embed});
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const std::string p = "graph_head.block" + std::to_string(l) + ".";
        auto& b = blocks[l];
        out.push_back({p + "ln1.gamma", &b.ln1_gamma});
        out.push_back({p + "ln1.beta", &b.ln1_beta});
        out.push_back({p + "attn.q.weight", &b.q_weight});
        out.push_back({p + "attn.q.bias", &b.q_bias});
        out.push_back({p + "attn.k.weight", &b.k_weight});
        out.push_back({p + "attn.k.bias", &b.k_bias});
        out.push_back({p + "attn.v.weight", &b.v_weight});
        out.push_back({p + "attn.v.bias", &b.v_bias});
        out.push_back({p + "attn.out.weight", &b.o_weight});
        out.push_back({p + "attn.out.bias", &b.o_bias});
        out.push_back({p + "ln2.gamma", &b.ln2_gamma});
        out.push_back({p + "ln2.beta", &b.ln2_beta});
        out.push_back({p + "ffn.fc1.weight", &b.ff1_weight});
        out.push_back({p + "ffn.fc1.bias", &b.ff1_bias});
        out.push_back({p + "ffn.fc2.weight", &b.ff2_weight});
        out.push_back({p + "ffn.fc2.bias", &b.ff2_bias});
    }
    out.push_back({"graph_head.f_d.fc1.weight", &fd_fc1_weight});
    out.push_back({"graph_head.f_d.fc1.bias", &fd_fc1_bias});
    out.push_back({"graph_head.f_d.fc2.weight", &fd_fc2_weight});
    out.push_back({"graph_head.f_d.fc2.bias", &fd_fc2_bias});
    out.push_back({"graph_head.W2", &w2});
}

ad::Var pool_states(const std::vector<ad::Var>& hidden) {
    if (hidden.empty()) {
        throw ConfigError("pool_states: the graph head needs m >= 2 (at least one input state)");
    }
    std::vector<ad::Var> columns;
    for (const auto& h : hidden) {
        if (h.value().rank() != 4) {
            throw ArgumentError("pool_states: expected [B, d, N, w], got " + shape_string(h.shape()));
        }
        const std::size_t batch = h.dim(0);
        const std::size_t d = h.dim(1);
        const std::size_t n = h.dim(2);
        const ad::Var node_major = ad::transpose_last2(ad::mean_axis(h, 3));  // [B, N, d]
        columns.push_back(ad::reshape(node_major, {batch, n, 1, d}));
    }
    return ad::concat(columns, 2);
}

ad::Var transformer_block(const ad::Var& x, const TransformerBlock& b, std::size_t heads) {
    const ad::Var a_in = ad::layer_norm(x, b.ln1_gamma, b.ln1_beta);
    const ad::Var q = ad::linear(a_in, b.q_weight, b.q_bias);
    const ad::Var k = ad::linear(a_in, b.k_weight, b.k_bias);
    const ad::Var v = ad::linear(a_in, b.v_weight, b.v_bias);
    const ad::Var attended = ad::linear(ad::causal_attention(q, k, v, heads), b.o_weight, b.o_bias);
    const ad::Var x1 = ad::add(x, attended);
    const ad::Var f_in = ad::layer_norm(x1, b.ln2_gamma, b.ln2_beta);
    const ad::Var ff = ad::linear(ad::gelu(ad::linear(f_in, b.ff1_weight, b.ff1_bias)), b.ff2_weight, b.ff2_bias);
    return ad::add(x1, ff);
}

ad::Var sequence_features(const ad::Var& pooled, const GraphHeadParams& params, std::size_t heads) {
    if (pooled.value().rank() != 4) {
        throw ArgumentError("sequence_features: expected [B, N, S, d], got " + shape_string(pooled.shape()));
    }
    const Shape shape = pooled.shape();
    const std::size_t batch = shape[0];
    const std::size_t n = shape[1];
    const std::size_t seq = shape[2];
    const std::size_t d = shape[3];
    if (params.pos_embed.dim(0) != seq || params.pos_embed.dim(1) != d) {
        throw ArgumentError("sequence_features: positional embedding " + shape_string(params.pos_embed.shape()) +
                            " does not match " + shape_string(shape));
    }
    // Each node is an independent sequence over the segment axis.
    ad::Var x = ad::add_trailing(ad::reshape(pooled, {batch * n, seq, d}), params.pos_embed);
    for (const auto& block : params.blocks) {
        x = transformer_block(x, block, heads);
    }
    return ad::reshape(x, shape);
}

ad::Var encode_graph_sequence(const ad::Var& pooled, const GraphHeadParams& params, std::size_t heads) {
    return ad::mean_axis(sequence_features(pooled, params, heads), 2);
}

ad::Var decode_graph(const ad::Var& o, const GraphHeadParams& params, double eps) {
    const ad::Var hidden = ad::tanh(ad::linear(o, params.fd_fc1_weight, params.fd_fc1_bias));
    const ad::Var j = ad::l2_normalize_rows(ad::linear(hidden, params.fd_fc2_weight, params.fd_fc2_bias), eps);
    return ad::gram_unit_diagonal(j);
}

ad::Var recent_update(const ad::Var& e, const ad::Var& a_recent, const ad::Var& w2) {
    return ad::gated_mix(w2, e, a_recent);
}

GraphForecast forecast_graph(const std::vector<ad::Var>& hidden, const ad::Var& a_recent,
                             const GraphHeadParams& params, const ModelConfig& config) {
    if (hidden.size() != config.m - 1) {
        throw ArgumentError("forecast_graph: expected " + std::to_string(config.m - 1) + " hidden states, got " +
                            std::to_string(hidden.size()));
    }
    GraphForecast out;
    const ad::Var o = encode_graph_sequence(pool_states(hidden), params, config.heads);
    out.e = decode_graph(o, params, config.l2_eps);
    out.a_hat = config.ablation.blends_recent() ? recent_update(out.e, a_recent, params.w2) : out.e;
    return out;
}

} // namespace dygraph
