#pragma once

#include "dygraph/autograd.hpp"
#include "dygraph/model_config.hpp"
#include "dygraph/params.hpp"
#include "dygraph/rng.hpp"

#include <array>
#include <vector>

namespace dygraph {

inline constexpr std::array<std::size_t, 4> kInceptionKernels{2, 3, 5, 7};

/// One dilated inception layer: four causal temporal convolutions whose d-channel
/// outputs are concatenated (4d) and projected back to d, followed by tanh.
struct InceptionLayer {
    std::array<ad::Var, 4> kernel_weight;  // [d, C_in, k]
    std::array<ad::Var, 4> kernel_bias;    // [d]
    ad::Var proj_weight;                   // [d, 4d]
    ad::Var proj_bias;                     // [d]
    std::size_t dilation = 1;
};

struct EncoderParams {
    ad::Var init_weight;  // [d], 1x1 convolution from one input channel
    ad::Var init_bias;    // [d]
    std::vector<InceptionLayer> inception;
    ad::Var node_embed;   // xi, [N, d]
    ad::Var w1;           // [N, N] static/dynamic gate logits
    ad::Var fa_fc1_weight;  // [d, 2d]
    ad::Var fa_fc1_bias;    // [d]
    ad::Var fa_fc2_weight;  // [1, d]
    ad::Var fa_fc2_bias;    // [1]
    std::vector<ad::Var> hop_weight;  // K + 1 matrices [d, d]
    ad::Var hop_bias;                 // [d]

    static EncoderParams init(const ModelConfig& config, Rng& rng);
    void collect(std::vector<NamedParam>& out);
};

/// windows [B, N, c] -> C [B, d, N, c]
ad::Var init_rep(const ad::Var& windows, const EncoderParams& params);
/// C [B, d, N, c] -> Z [B, d, N, c] through every inception layer.
ad::Var dilated_inception(const ad::Var& c, const EncoderParams& params);
/// Q = sigmoid((raw + raw^T) / 2), raw_ij = f_a(xi_i || xi_j); [N, N].
ad::Var static_graph(const EncoderParams& params);
/// sigmoid(W1) * Q + (1 - sigmoid(W1)) * A; A may be [N, N] or [B, N, N].
ad::Var blend_adjacency(const ad::Var& q, const ad::Var& a, const ad::Var& w1);
/// Mix-hop propagation of z_seg [B, d, N, w] over the self-loop normalized adjacency [B, N, N].
ad::Var mixhop_conv(const ad::Var& z_seg, const ad::Var& adjacency, const EncoderParams& params, double beta);

struct EncoderOutput {
    ad::Var c;                        // [B, d, N, c]
    ad::Var z;                        // [B, d, N, c]
    std::vector<ad::Var> z_segments;  // m slices of z, [B, d, N, w]
    std::vector<ad::Var> hidden;      // H for the first `propagate` segments
};

/// graphs holds the m observed adjacency batches [B, N, N], oldest first. Only the
/// first `propagate` segments go through graph convolution (the others are not needed
/// by the enabled heads).
EncoderOutput encode(const ad::Var& windows, const std::vector<ad::Var>& graphs, const EncoderParams& params,
                     const ModelConfig& config, std::size_t propagate);

} // namespace dygraph
