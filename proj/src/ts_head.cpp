#include "dygraph/ts_head.hpp"

#include "dygraph/errors.hpp"

namespace dygraph {

TsHeadParams TsHeadParams::init(const ModelConfig& config, Rng& rng) {
    const std::size_t d = config.d;
    const std::size_t c = config.window();
    TsHeadParams p;
    p.f1_weight = fan_in_parameter({d, d, c}, d * c, rng);
    p.f1_bias = zero_parameter({d});
    p.f2_weight = fan_in_parameter({d, d, c}, d * c, rng);
    p.f2_bias = zero_parameter({d});
    p.f3_weight = fan_in_parameter({d, d, c}, d * c, rng);
    p.f3_bias = zero_parameter({d});
    p.bn_gamma = filled_parameter({d}, 1.0);
    p.bn_beta = zero_parameter({d});
    p.bn.running_mean = Tensor({d}, 0.0);
    p.bn.running_var = Tensor({d}, 1.0);
    p.bn.momentum = config.bn_momentum;
    p.bn.eps = config.bn_eps;
    p.fo_fc1_weight = fan_in_parameter({d, d}, d, rng);
    p.fo_fc1_bias = zero_parameter({d});
    p.fo_fc2_weight = fan_in_parameter({1, d}, d, rng);
    p.fo_fc2_bias = zero_parameter({1});
    return p;
}

void TsHeadParams::collect(std::vector<NamedParam>& out) {
    out.push_back({"ts_head.f1.weight", &f1_weight});
    out.push_back({"ts_head.f1.bias", &f1_bias});
    out.push_back({"ts_head.f2.weight", &f2_weight});
    out.push_back({"ts_head.f2.bias", &f2_bias});
    out.push_back({"ts_head.f3.weight", &f3_weight});
    out.push_back({"ts_head.f3.bias", &f3_bias});
    out.push_back({"ts_head.bn.gamma", &bn_gamma});
    out.push_back({"ts_head.bn.beta", &bn_beta});
    out.push_back({"ts_head.f_o.fc1.weight", &fo_fc1_weight});
    out.push_back({"ts_head.f_o.fc1.bias", &fo_fc1_bias});
    out.push_back({"ts_head.f_o.fc2.weight", &fo_fc2_weight});
    out.push_back({"ts_head.f_o.fc2.bias", &fo_fc2_bias});
}

void TsHeadParams::collect_buffers(std::vector<NamedBuffer>& out) {
    out.push_back({"ts_head.bn.running_mean", &bn.running_mean});
    out.push_back({"ts_head.bn.running_var", &bn.running_var});
}

ad::Var assemble_m(const std::vector<ad::Var>& hidden, TsHeadParams& params, NormMode mode) {
    if (hidden.empty()) {
        throw ArgumentError("assemble_m: no hidden states");
    }
    const bool training = mode != NormMode::Eval;
    return ad::batch_norm(ad::concat(hidden, 3), params.bn_gamma, params.bn_beta, params.bn, training,
                          mode == NormMode::Train);
}

ad::Var forecast_series(const ad::Var& c, const ad::Var& z, const ad::Var& m, const TsHeadParams& params) {
    // A kernel spanning all c steps leaves one time position per branch, so pooling the
    // concatenations over time is the plain sum of the three branch outputs.
    const ad::Var u = ad::add(ad::add(ad::full_time_conv(c, params.f1_weight, params.f1_bias),
                                      ad::full_time_conv(z, params.f2_weight, params.f2_bias)),
                              ad::full_time_conv(m, params.f3_weight, params.f3_bias));  // [B, d, N]
    const ad::Var per_node = ad::transpose_last2(u);                                     // [B, N, d]
    const ad::Var hidden = ad::tanh(ad::linear(per_node, params.fo_fc1_weight, params.fo_fc1_bias));
    const ad::Var y = ad::linear(hidden, params.fo_fc2_weight, params.fo_fc2_bias);  // [B, N, 1]
    return ad::reshape(y, {y.dim(0), y.dim(1)});
}

} // namespace dygraph
