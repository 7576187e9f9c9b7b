#pragma once

#include "dygraph/autograd.hpp"
#include "dygraph/model_config.hpp"
#include "dygraph/params.hpp"
#include "dygraph/rng.hpp"

#include <vector>

namespace dygraph {

struct TsHeadParams {
    ad::Var f1_weight, f1_bias;  // [d, d, c] over C
    ad::Var f2_weight, f2_bias;  // [d, d, c] over Z
    ad::Var f3_weight, f3_bias;  // [d, d, c] over M
    ad::Var bn_gamma, bn_beta;   // [d]
    ad::BatchNormState bn;
    ad::Var fo_fc1_weight, fo_fc1_bias;  // [d, d]
    ad::Var fo_fc2_weight, fo_fc2_bias;  // [1, d]

    static TsHeadParams init(const ModelConfig& config, Rng& rng);
    void collect(std::vector<NamedParam>& out);
    void collect_buffers(std::vector<NamedBuffer>& out);
};

/// How batch normalization of M treats its statistics.
enum class NormMode {
    Eval,              ///< running statistics, read-only
    Train,             ///< batch statistics, running estimates updated
    TrainNoUpdate,     ///< batch statistics, running estimates untouched (gradient checks)
};

/// Time-concatenation of the m states [B, d, N, w] followed by batch normalization: [B, d, N, c].
ad::Var assemble_m(const std::vector<ad::Var>& hidden, TsHeadParams& params, NormMode mode);
/// y_hat [B, N] = f_o(f1(C) + f2(Z) + f3(M)) node-wise.
ad::Var forecast_series(const ad::Var& c, const ad::Var& z, const ad::Var& m, const TsHeadParams& params);

} // namespace dygraph
