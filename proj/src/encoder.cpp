#include "dygraph/encoder.hpp"

#include "dygraph/errors.hpp"

#include <string>

namespace dygraph {

EncoderParams EncoderParams::init(const ModelConfig& config, Rng& rng) {
    const std::size_t d = config.d;
    const std::size_t n = config.num_series;
    EncoderParams p;
    p.init_weight = fan_in_parameter({d}, 1, rng);
    p.init_bias = zero_parameter({d});
    std::size_t dilation = 1;
    for (std::size_t layer = 0; layer < config.inception_layers; ++layer) {
        InceptionLayer il;
        il.dilation = dilation;
        for (std::size_t k = 0; k < kInceptionKernels.size(); ++k) {
            const std::size_t kernel = kInceptionKernels[k];
            il.kernel_weight[k] = fan_in_parameter({d, d, kernel}, d * kernel, rng);
            il.kernel_bias[k] = zero_parameter({d});
        }
        il.proj_weight = fan_in_parameter({d, 4 * d}, 4 * d, rng);
        il.proj_bias = zero_parameter({d});
        p.inception.push_back(std::move(il));
        dilation *= 2;
    }
    p.node_embed = ad::Var::parameter(normal_tensor({n, d}, 1.0, rng));
    p.w1 = zero_parameter({n, n});
    p.fa_fc1_weight = fan_in_parameter({d, 2 * d}, 2 * d, rng);
    p.fa_fc1_bias = zero_parameter({d});
    p.fa_fc2_weight = fan_in_parameter({1, d}, d, rng);
    p.fa_fc2_bias = zero_parameter({1});
    for (std::size_t k = 0; k <= config.mixhop_depth; ++k) {
        p.hop_weight.push_back(fan_in_parameter({d, d}, d * (config.mixhop_depth + 1), rng));
    }
    p.hop_bias = zero_parameter({d});
    return p;
}

void EncoderParams::collect(std::vector<NamedParam>& out) {
    out.push_back({"encoder.init_conv.weight", &init_weight});
    out.push_back({"encoder.init_conv.bias", &init_bias});
    for (std::size_t layer = 0; layer < inception.size(); ++layer) {
        const std::string prefix = "encoder.inception" + std::to_string(layer) + ".";
        for (std::size_t k = 0; k < kInceptionKernels.size(); ++k) {
            const std::string branch = prefix + "k" + std::to_string(kInceptionKernels[k]);
            out.push_back({branch + ".weight", &inception[layer].kernel_weight[k]});
            out.push_back({branch + ".bias", &inception[layer].kernel_bias[k]});
        }
        out.push_back({prefix + "proj.weight", &inception[layer].proj_weight});
        out.push_back({prefix + "proj.bias", &inception[layer].proj_bias});
    }
    out.push_back({"encoder.node_embed", &node_embed});
    out.push_back({"encoder.W1", &w1});
    out.push_back({"encoder.f_a.fc1.weight", &fa_fc1_weight});
    out.push_back({"encoder.f_a.fc1.bias", &fa_fc1_bias});
    out.push_back({"encoder.f_a.fc2.weight", &fa_fc2_weight});
    out.push_back({"encoder.f_a.fc2.bias", &fa_fc2_bias});
    for (std::size_t k = 0; k < hop_weight.size(); ++k) {
        out.push_back({"encoder.mixhop.hop" + std::to_string(k) + ".weight", &hop_weight[k]});
    }
    out.push_back({"encoder.mixhop.bias", &hop_bias});
}

ad::Var init_rep(const ad::Var& windows, const EncoderParams& params) {
    if (windows.value().rank() != 3) {
        throw ArgumentError("init_rep: expected windows [B, N, c], got " + shape_string(windows.shape()));
    }
    return ad::pointwise_channels(windows, params.init_weight, params.init_bias);
}

ad::Var dilated_inception(const ad::Var& c, const EncoderParams& params) {
    if (c.value().rank() != 4) {
        throw ArgumentError("dilated_inception: expected [B, d, N, c], got " + shape_string(c.shape()));
    }
    if (c.dim(3) < kInceptionKernels.back()) {
        throw ConfigError("window too short for inception kernels: c = " + std::to_string(c.dim(3)) + " < 7");
    }
    ad::Var x = c;
    for (const auto& layer : params.inception) {
        std::vector<ad::Var> branches;
        for (std::size_t k = 0; k < kInceptionKernels.size(); ++k) {
            branches.push_back(ad::temporal_conv(x, layer.kernel_weight[k], layer.kernel_bias[k], layer.dilation));
        }
        x = ad::tanh(ad::channel_mix(ad::concat(branches, 1), layer.proj_weight, layer.proj_bias));
    }
    return x;
}

ad::Var static_graph(const EncoderParams& params) {
    const std::size_t d = params.node_embed.dim(1);
    const std::size_t n = params.node_embed.dim(0);
    // fc1 on the concatenation splits into a left half acting on xi_i and a right half on xi_j.
    const ad::Var left = ad::slice(params.fa_fc1_weight, 1, 0, d);
    const ad::Var right = ad::slice(params.fa_fc1_weight, 1, d, d);
    const ad::Var u = ad::linear(params.node_embed, left, ad::Var{});
    const ad::Var v = ad::linear(params.node_embed, right, ad::Var{});
    const ad::Var hidden = ad::tanh(ad::pairwise_sum(u, v, params.fa_fc1_bias));
    const ad::Var raw = ad::reshape(ad::linear(hidden, params.fa_fc2_weight, params.fa_fc2_bias), {n, n});
    return ad::sigmoid(ad::add_scaled(raw, 0.5, ad::transpose_last2(raw), 0.5));
}

ad::Var blend_adjacency(const ad::Var& q, const ad::Var& a, const ad::Var& w1) { return ad::gated_mix(w1, q, a); }

ad::Var mixhop_conv(const ad::Var& z_seg, const ad::Var& adjacency, const EncoderParams& params, double beta) {
    ad::Var a = adjacency;
    if (adjacency.value().rank() == 2) {
        // One shared graph for the whole batch.
        const ad::Var single = ad::reshape(adjacency, {1, adjacency.dim(0), adjacency.dim(1)});
        a = ad::concat(std::vector<ad::Var>(z_seg.dim(0), single), 0);
    }
    const ad::Var propagation = ad::self_loop_row_normalize(a);
    ad::Var h = z_seg;
    ad::Var out = ad::channel_mix(h, params.hop_weight[0], params.hop_bias);
    for (std::size_t k = 1; k < params.hop_weight.size(); ++k) {
        h = ad::add_scaled(z_seg, beta, ad::node_propagate(propagation, h), 1.0 - beta);
        out = ad::add(out, ad::channel_mix(h, params.hop_weight[k], ad::Var{}));
    }
    return out;
}

EncoderOutput encode(const ad::Var& windows, const std::vector<ad::Var>& graphs, const EncoderParams& params,
                     const ModelConfig& config, std::size_t propagate) {
    if (windows.value().rank() != 3 || windows.dim(1) != config.num_series || windows.dim(2) != config.window()) {
        throw ArgumentError("encode: windows " + shape_string(windows.shape()) + " do not match N = " +
                            std::to_string(config.num_series) + ", c = " + std::to_string(config.window()));
    }
    if (propagate > config.m || (propagate > 0 && graphs.size() < propagate)) {
        throw ArgumentError("encode: " + std::to_string(graphs.size()) + " graphs supplied, " +
                            std::to_string(propagate) + " needed");
    }
    EncoderOutput out;
    out.c = init_rep(windows, params);
    out.z = dilated_inception(out.c, params);
    for (std::size_t s = 0; s < config.m; ++s) {
        out.z_segments.push_back(ad::slice(out.z, 3, s * config.w, config.w));
    }
    if (propagate == 0) {
        return out;
    }
    const bool use_static = config.ablation.uses_static_graph();
    const ad::Var q = use_static ? static_graph(params) : ad::Var{};
    for (std::size_t s = 0; s < propagate; ++s) {
        const ad::Var adjacency = use_static ? blend_adjacency(q, graphs[s], params.w1) : graphs[s];
        out.hidden.push_back(mixhop_conv(out.z_segments[s], adjacency, params, config.mixhop_beta));
    }
    return out;
}

} // namespace dygraph
