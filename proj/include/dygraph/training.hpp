#pragma once

#include "dygraph/config.hpp"
#include "dygraph/dataio.hpp"
#include "dygraph/graphs.hpp"
#include "dygraph/model.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dygraph {

class Adam {
public:
    Adam(std::vector<NamedParam> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// Applies one update from the accumulated gradients (parameters without a gradient are skipped).
    void step();
    void zero_grad();
    /// Rescales gradients so their global l2 norm is at most max_norm; returns the norm before clipping.
    double clip_grad_norm(double max_norm);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    std::vector<NamedParam> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    std::size_t t_ = 0;
};

struct LossSummary {
    double ts = 0.0;
    double graph = 0.0;
    double total = 0.0;
};

struct EpochStats {
    std::size_t epoch = 0;  ///< 1-based
    LossSummary train;      ///< sample-weighted mean over the epoch's batches
    LossSummary val;        ///< eval-mode loss after the epoch
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;  ///< 1-based, argmin of val.total (first on ties)
    double best_val = 0.0;
    double wall_seconds = 0.0;
    std::size_t train_samples = 0;
    std::size_t val_samples = 0;
};

/// Eval-mode loss over samples that have a target, averaged per sample.
LossSummary evaluate_loss(Model& model, std::span<const WindowSample> samples, GraphCache& cache,
                          std::size_t batch_size);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Adam on the joint loss for config.epochs epochs, restoring the parameters of the
/// epoch with the lowest validation loss before returning. Samples without a target
/// are ignored. Throws TrainingError on a non-finite loss.
TrainReport train(Model& model, std::span<const WindowSample> train_samples,
                  std::span<const WindowSample> val_samples, GraphCache& cache, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

void save_train_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                       const TrainReport& report);

struct GradcheckOptions {
    std::size_t num_series = 4;
    std::size_t d = 8;
    std::size_t m = 3;
    std::size_t w = 4;
    std::size_t layers = 1;
    std::size_t heads = 4;
    std::size_t batch = 2;
    std::uint64_t seed = 0;
    double step = 1e-5;
    double tolerance = 1e-4;
    Ablation ablation;
    /// Zero every head weight and draw head biases at random instead.
    bool zero_heads = false;
    /// Test hook: perturb the analytic gradient of this parameter before comparing.
    std::optional<std::string> corrupt_group;
};

struct GroupCheck {
    std::string name;
    std::size_t entries = 0;
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;
    bool passed = true;
};

struct GradcheckReport {
    std::vector<GroupCheck> groups;
    bool passed = true;
    std::vector<std::string> failed_groups;
};

/// Central-difference check of every parameter group on a tiny random problem.
GradcheckReport gradcheck(const GradcheckOptions& options);

} // namespace dygraph
