#include "dygraph/errors.hpp"
#include "dygraph/training.hpp"
#include "temp_dir.hpp"
#include "tiny_problem.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace dygraph;
using namespace dygraph::testing;
namespace ad = dygraph::ad;

TEST_SUITE("training") {

TEST_CASE("first Adam step moves each entry by lr against its gradient sign") {
    ad::Var x = ad::Var::parameter(Tensor({3}, {1.0, -2.0, 0.5}));
    ad::Var untouched = ad::Var::parameter(Tensor({1}, {7.0}));
    Adam opt({{"x", &x}, {"u", &untouched}}, 0.1);
    ad::backward(ad::sum(ad::mul(x, ad::Var::constant(Tensor({3}, {2.0, -3.0, 0.0})))));
    opt.step();
    CHECK(x.value()[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(x.value()[1] == doctest::Approx(-1.9).epsilon(1e-7));
    CHECK(x.value()[2] == 0.5);
    CHECK(untouched.value()[0] == 7.0);
}

TEST_CASE("gradient clipping rescales to the cap") {
    ad::Var x = ad::Var::parameter(Tensor({2}, 0.0));
    Adam opt({{"x", &x}}, 0.1);
    ad::backward(ad::sum(ad::mul(x, ad::Var::constant(Tensor({2}, {3.0, 4.0})))));
    CHECK(opt.clip_grad_norm(1.0) == doctest::Approx(5.0));
    CHECK(x.grad()[0] == doctest::Approx(0.6));
    CHECK(x.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("seeded training runs are bitwise identical") {
    const auto config = tiny_config();
    auto run = [&] {
        auto p = make_tiny_problem(config);
        Model model(config.model_config(p.num_series()), config.seed);
        return train(model, p.train, p.val, *p.cache, config);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.epochs.size() == config.epochs);
    for (std::size_t e = 0; e < a.epochs.size(); ++e) {
        CHECK(a.epochs[e].train.total == b.epochs[e].train.total);
        CHECK(a.epochs[e].val.total == b.epochs[e].val.total);
    }
    CHECK(a.best_epoch == b.best_epoch);
}

TEST_CASE("restored best epoch reproduces the reported validation loss") {
    auto config = tiny_config();
    config.epochs = 4;
    auto p = make_tiny_problem(config);
    Model model(config.model_config(p.num_series()), 0);
    std::size_t callbacks = 0;
    const auto report = train(model, p.train, p.val, *p.cache, config, [&](const EpochStats&) { ++callbacks; });
    CHECK(callbacks == 4);
    const auto best = std::min_element(report.epochs.begin(), report.epochs.end(),
                                       [](const auto& x, const auto& y) { return x.val.total < y.val.total; });
    CHECK(report.best_epoch == best->epoch);
    CHECK(report.best_val == best->val.total);
    CHECK(evaluate_loss(model, p.val, *p.cache, config.batch_size).total == report.best_val);
    for (const auto& e : report.epochs) {
        CHECK(e.train.total == e.train.ts + e.train.graph);
    }
}

TEST_CASE("training without the graph task never runs the graph head") {
    auto config = tiny_config();
    config.ablation.wo_graph = true;
    auto p = make_tiny_problem(config);
    Model model(config.model_config(p.num_series()), 0);
    const auto report = train(model, p.train, p.val, *p.cache, config);
    CHECK(model.graph_head_calls() == 0);
    CHECK(report.epochs.back().train.graph == 0.0);

    auto full = tiny_config();
    auto q = make_tiny_problem(full);
    Model with_head(full.model_config(q.num_series()), 0);
    train(with_head, q.train, q.val, *q.cache, full);
    CHECK(with_head.graph_head_calls() > 0);
}

TEST_CASE("a non-finite loss aborts with the batch index") {
    const auto config = tiny_config();
    auto p = make_tiny_problem(config);
    Model model(config.model_config(p.num_series()), 0);
    model.ts_head.fo_fc2_bias.mutable_value()[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        train(model, p.train, p.val, *p.cache, config);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("batch 0") != std::string::npos);
    }
}

TEST_CASE("train report files") {
    TempDir dir;
    TrainReport report;
    report.epochs.push_back({1, {0.1, 0.2, 0.3}, {0.4, 0.5, 0.9}, 1.5});
    report.best_epoch = 1;
    report.best_val = 0.9;
    save_train_report(dir / "r.json", dir / "r.csv", report);
    CHECK(std::filesystem::file_size(dir / "r.json") > 0);
    CHECK(std::filesystem::file_size(dir / "r.csv") > 0);
}

TEST_CASE("gradient check passes on the random model and with zeroed heads") {
    GradcheckOptions options;
    const auto full = gradcheck(options);
    CHECK(full.passed);
    CHECK(full.failed_groups.empty());
    CHECK(full.groups.size() > 40);
    options.zero_heads = true;
    CHECK(gradcheck(options).passed);
}

TEST_CASE("gradient check names a corrupted group") {
    GradcheckOptions options;
    options.corrupt_group = "graph_head.W2";
    const auto report = gradcheck(options);
    CHECK_FALSE(report.passed);
    CHECK(report.failed_groups == std::vector<std::string>{"graph_head.W2"});
}

} // TEST_SUITE
