#include "dygraph/training.hpp"

#include "dygraph/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace dygraph {

Adam::Adam(std::vector<NamedParam> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.var->value().size(), 0.0);
        v_.emplace_back(p.var->value().size(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) {
        p.var->zero_grad();
    }
}

double Adam::clip_grad_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& p : params_) {
        for (double g : p.var->grad()) {
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double factor = max_norm / norm;
        for (auto& p : params_) {
            for (double& g : p.var->mutable_grad()) {
                g *= factor;
            }
        }
    }
    return norm;
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        const auto& grad = params_[k].var->grad();
        if (grad.empty()) {
            continue;
        }
        double* value = params_[k].var->mutable_value().ptr();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < grad.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
            value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

namespace {

std::vector<std::size_t> indices_with_target(std::span<const WindowSample> samples) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].has_target()) {
            out.push_back(i);
        }
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

LossSummary evaluate_loss(Model& model, std::span<const WindowSample> samples, GraphCache& cache,
                          std::size_t batch_size) {
    const auto indices = indices_with_target(samples);
    if (indices.empty()) {
        throw ArgumentError("evaluate_loss: no samples with a target");
    }
    const ModelConfig& mc = model.config();
    LossSummary sum;
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, indices.size() - start);
        const Batch batch = make_batch(samples, std::span(indices).subspan(start, len), mc.m, mc.w, cache);
        const LossParts parts = joint_loss(model.forward(batch, NormMode::Eval), batch, mc.ablation);
        const auto weight = static_cast<double>(len);
        sum.ts += parts.ts * weight;
        sum.graph += parts.graph * weight;
    }
    const auto count = static_cast<double>(indices.size());
    sum.ts /= count;
    sum.graph /= count;
    sum.total = sum.ts + sum.graph;
    return sum;
}

TrainReport train(Model& model, std::span<const WindowSample> train_samples,
                  std::span<const WindowSample> val_samples, GraphCache& cache, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    const auto start = std::chrono::steady_clock::now();
    const ModelConfig& mc = model.config();
    const auto train_indices = indices_with_target(train_samples);
    if (train_indices.empty()) {
        throw ArgumentError("train: no training samples with a target");
    }
    if (indices_with_target(val_samples).empty()) {
        throw ArgumentError("train: no validation samples with a target");
    }
    TrainReport report;
    report.train_samples = train_indices.size();
    report.val_samples = indices_with_target(val_samples).size();

    Adam optimizer(model.parameters(), config.lr);
    Rng shuffle_rng(config.seed, 0x5348);
    std::optional<TensorArchive> best_state;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order = train_indices;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        LossSummary running;
        std::size_t batch_index = 0;
        for (std::size_t s = 0; s < order.size(); s += config.batch_size, ++batch_index) {
            const std::size_t len = std::min(config.batch_size, order.size() - s);
            const Batch batch = make_batch(train_samples, std::span(order).subspan(s, len), mc.m, mc.w, cache);
            const LossParts parts = joint_loss(model.forward(batch, NormMode::Train), batch, mc.ablation);
            const double total = parts.total.item();
            if (!std::isfinite(total)) {
                throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index) + " (first window end " +
                                    std::to_string(batch.end_indices.front()) + ")");
            }
            optimizer.zero_grad();
            ad::backward(parts.total);
            if (config.grad_clip > 0.0) {
                optimizer.clip_grad_norm(config.grad_clip);
            }
            optimizer.step();
            const auto weight = static_cast<double>(len);
            running.ts += parts.ts * weight;
            running.graph += parts.graph * weight;
        }
        EpochStats stats;
        stats.epoch = epoch;
        const auto count = static_cast<double>(order.size());
        stats.train.ts = running.ts / count;
        stats.train.graph = running.graph / count;
        stats.train.total = stats.train.ts + stats.train.graph;
        stats.val = evaluate_loss(model, val_samples, cache, config.batch_size);
        if (!std::isfinite(stats.val.total)) {
            throw TrainingError("non-finite validation loss after epoch " + std::to_string(epoch));
        }
        if (stats.val.total < best_val) {
            best_val = stats.val.total;
            best_state = model.state();
            report.best_epoch = epoch;
        }
        stats.seconds = seconds_since(epoch_start);
        report.epochs.push_back(stats);
        if (on_epoch) {
            on_epoch(stats);
        }
        optimizer.set_lr(optimizer.lr() * config.lr_decay);
    }
    model.load_state(*best_state);
    report.best_val = best_val;
    report.wall_seconds = seconds_since(start);
    return report;
}

void save_train_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                       const TrainReport& report) {
    nlohmann::json doc;
    doc["best_epoch"] = report.best_epoch;
    doc["best_val_loss"] = report.best_val;
    doc["wall_seconds"] = report.wall_seconds;
    doc["train_samples"] = report.train_samples;
    doc["val_samples"] = report.val_samples;
    doc["epochs"] = nlohmann::json::array();
    for (const auto& e : report.epochs) {
        doc["epochs"].push_back({{"epoch", e.epoch},
                                 {"train_ts", e.train.ts},
                                 {"train_graph", e.train.graph},
                                 {"train_total", e.train.total},
                                 {"val_ts", e.val.ts},
                                 {"val_graph", e.val.graph},
                                 {"val_total", e.val.total},
                                 {"seconds", e.seconds}});
    }
    std::ofstream json_out(json_path);
    if (!json_out) {
        throw LoadError("cannot write " + json_path.string());
    }
    json_out << doc.dump(2) << '\n';
    std::ofstream csv(csv_path);
    if (!csv) {
        throw LoadError("cannot write " + csv_path.string());
    }
    csv << "epoch,train_ts,train_graph,train_total,val_ts,val_graph,val_total,seconds\n" << std::setprecision(17);
    for (const auto& e : report.epochs) {
        csv << e.epoch << ',' << e.train.ts << ',' << e.train.graph << ',' << e.train.total << ',' << e.val.ts << ','
            << e.val.graph << ',' << e.val.total << ',' << e.seconds << '\n';
    }
}

// Central differences carry roughly 1e-11 of roundoff at step 1e-5. Groups whose true
// gradient is zero would otherwise compare noise against noise.
constexpr double kGradScaleFloor = 1e-6;

GradcheckReport gradcheck(const GradcheckOptions& options) {
    ModelConfig mc;
    mc.num_series = options.num_series;
    mc.d = options.d;
    mc.layers = options.layers;
    mc.heads = options.heads;
    mc.m = options.m;
    mc.w = options.w;
    mc.ablation = options.ablation;
    Model model(mc, options.seed);

    const std::size_t c = mc.window();
    Rng data_rng(options.seed, 0x6763);
    LabeledSeries series;
    series.values = Tensor({mc.num_series, c + options.batch});
    for (auto& v : series.values.values()) {
        v = data_rng.uniform();
    }
    for (std::size_t i = 0; i < mc.num_series; ++i) {
        series.series_names.push_back("s" + std::to_string(i));
    }
    const auto samples = make_windows(series, mc.m, mc.w, 1);
    std::vector<std::size_t> indices(options.batch);
    for (std::size_t b = 0; b < options.batch; ++b) {
        indices[b] = b;
    }
    GraphCache cache(mc.num_series, mc.w, 1.0);
    const Batch batch = make_batch(samples, indices, mc.m, mc.w, cache);

    auto params = model.parameters();
    if (options.zero_heads) {
        Rng bias_rng(options.seed, 0x7a68);
        for (auto& p : params) {
            if (!p.name.starts_with("graph_head.") && !p.name.starts_with("ts_head.")) {
                continue;
            }
            const bool is_bias = p.name.ends_with("bias") || p.name.ends_with("beta");
            for (auto& v : p.var->mutable_value().values()) {
                v = is_bias ? bias_rng.uniform(-0.5, 0.5) : 0.0;
            }
        }
    }
    auto loss_value = [&]() {
        return joint_loss(model.forward(batch, NormMode::TrainNoUpdate), batch, mc.ablation).total;
    };

    for (auto& p : params) {
        p.var->zero_grad();
    }
    ad::backward(loss_value());

    GradcheckReport report;
    for (auto& p : params) {
        GroupCheck check;
        check.name = p.name;
        const std::size_t count = p.var->value().size();
        check.entries = count;
        std::vector<double> analytic = p.var->grad();
        analytic.resize(count, 0.0);
        if (options.corrupt_group && *options.corrupt_group == p.name) {
            analytic[0] += 1e-2 * (1.0 + std::abs(analytic[0]));
        }
        double max_diff = 0.0;
        double max_scale = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            double& slot = p.var->mutable_value()[i];
            const double saved = slot;
            slot = saved + options.step;
            const double up = loss_value().item();
            slot = saved - options.step;
            const double down = loss_value().item();
            slot = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            max_diff = std::max(max_diff, std::abs(analytic[i] - numeric));
            max_scale = std::max({max_scale, std::abs(analytic[i]), std::abs(numeric)});
        }
        check.max_abs_error = max_diff;
        check.max_rel_error = max_diff == 0.0 ? 0.0 : max_diff / std::max(max_scale, kGradScaleFloor);
        check.passed = check.max_rel_error <= options.tolerance;
        if (!check.passed) {
            report.passed = false;
            report.failed_groups.push_back(p.name);
        }
        report.groups.push_back(std::move(check));
    }
    return report;
}

} // namespace dygraph
