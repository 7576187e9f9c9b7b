#pragma once

#include "dygraph/autograd.hpp"
#include "dygraph/model_config.hpp"
#include "dygraph/params.hpp"
#include "dygraph/rng.hpp"

#include <vector>

namespace dygraph {

/// Pre-norm transformer block: x + Attn(LN(x)), then x + FFN(LN(x)) with a GELU FFN of width 4d.
struct TransformerBlock {
    ad::Var ln1_gamma, ln1_beta;
    ad::Var q_weight, q_bias, k_weight, k_bias, v_weight, v_bias, o_weight, o_bias;
    ad::Var ln2_gamma, ln2_beta;
    ad::Var ff1_weight, ff1_bias;  // [4d, d]
    ad::Var ff2_weight, ff2_bias;  // [d, 4d]
};

struct GraphHeadParams {
    ad::Var pos_embed;  // [m - 1, d]
    std::vector<TransformerBlock> blocks;
    ad::Var fd_fc1_weight, fd_fc1_bias;  // [d, d]
    ad::Var fd_fc2_weight, fd_fc2_bias;  // [d, d]
    ad::Var w2;                          // [N, N]

    static GraphHeadParams init(const ModelConfig& config, Rng& rng);
    void collect(std::vector<NamedParam>& out);
};

/// hidden: m - 1 states [B, d, N, w] -> P [B, N, m - 1, d] (time-averaged).
ad::Var pool_states(const std::vector<ad::Var>& hidden);
/// x [G, S, d] -> [G, S, d]; position s only sees positions <= s.
ad::Var transformer_block(const ad::Var& x, const TransformerBlock& block, std::size_t heads);
/// P [B, N, S, d] + positional embedding through every block; returns [B, N, S, d] before pooling.
ad::Var sequence_features(const ad::Var& pooled, const GraphHeadParams& params, std::size_t heads);
/// Mean over segments of sequence_features: O [B, N, d].
ad::Var encode_graph_sequence(const ad::Var& pooled, const GraphHeadParams& params, std::size_t heads);
/// J = l2-normalized rows of f_d(O); E = J J^T with unit diagonal, [B, N, N].
ad::Var decode_graph(const ad::Var& o, const GraphHeadParams& params, double eps);
/// sigmoid(W2) * E + (1 - sigmoid(W2)) * A_recent.
ad::Var recent_update(const ad::Var& e, const ad::Var& a_recent, const ad::Var& w2);

struct GraphForecast {
    ad::Var e;      // [B, N, N]
    ad::Var a_hat;  // [B, N, N]
};

/// Runs the whole head on the first m - 1 hidden states; a_recent is graph m - 1 of each sample.
GraphForecast forecast_graph(const std::vector<ad::Var>& hidden, const ad::Var& a_recent,
                             const GraphHeadParams& params, const ModelConfig& config);

} // namespace dygraph
