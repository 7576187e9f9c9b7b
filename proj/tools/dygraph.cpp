// Command-line driver: every subcommand writes its artifacts and a manifest.json into --out.

#include "dygraph/config.hpp"
#include "dygraph/dataio.hpp"
#include "dygraph/detection.hpp"
#include "dygraph/errors.hpp"
#include "dygraph/graphs.hpp"
#include "dygraph/kernel.hpp"
#include "dygraph/pipeline.hpp"
#include "dygraph/synthetic.hpp"
#include "dygraph/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dygraph;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct Options {
    std::string config;
    std::string data;
    std::string labels_column = "label";
    std::string out;
    std::string run;
    std::string graphs;
    std::optional<std::uint64_t> seed;
    std::optional<double> tau;
    std::optional<std::size_t> stride;
    std::string kernel = "auto";
    bool scale_scores = false;
};

// 64-bit FNV-1a of the file bytes; enough to tell datasets apart in a manifest.
std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    std::uint64_t h = 1469598103934665603ULL;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
            h *= 1099511628211ULL;
        }
    }
    std::ostringstream s;
    s << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

fs::path require_out(const Options& o) {
    if (o.out.empty()) {
        throw ArgumentError("--out is required");
    }
    fs::create_directories(o.out);
    return o.out;
}

/// Collects what a run directory needs to be reproduced.
class Manifest {
public:
    /// Follow-up commands writing into an existing run directory get their own manifest file.
    Manifest(std::string command, const fs::path& dir, bool follow_up = false)
        : dir_(dir), file_(follow_up ? "manifest." + command + ".json" : "manifest.json") {
        doc_["tool"] = "dygraph";
        doc_["version"] = kToolVersion;
        doc_["command"] = std::move(command);
        doc_["datasets"] = json::object();
        doc_["artifacts"] = json::array();
    }
    void config(const TrainConfig& c) {
        json cfg = json::object();
        for (const auto& key : TrainConfig::keys()) {
            cfg[key] = c.get(key);
        }
        doc_["config"] = cfg;
        doc_["seed"] = c.seed;
    }
    void dataset(const std::string& role, const fs::path& path) {
        doc_["datasets"][role] = {{"path", fs::absolute(path).string()}, {"digest", file_digest(path)}};
    }
    void artifact(const std::string& name) { doc_["artifacts"].push_back(name); }
    json& operator[](const std::string& key) { return doc_[key]; }
    void save() const { write_json(dir_ / file_, doc_); }

private:
    fs::path dir_;
    std::string file_;
    json doc_;
};

TrainConfig effective_config(const Options& o) {
    TrainConfig c = o.config.empty() ? TrainConfig{} : load_train_config(o.config);
    if (o.seed) {
        c.seed = *o.seed;
    }
    if (o.tau) {
        c.tau = *o.tau;
    }
    if (o.stride) {
        c.stride = *o.stride;
    }
    c.validate();
    return c;
}

void apply_kernel_flag(const Options& o, Manifest& manifest) {
    const KernelMode mode = parse_kernel_mode(o.kernel);
    resolve_batch_kernel(mode);  // On without a linked kernel fails here, before any work
    set_default_kernel_mode(mode);
    const bool native = mode == KernelMode::On || (mode == KernelMode::Auto && native_kernel_available());
    manifest["graph_kernel"] = native ? "native" : "reference";
}

struct Dataset {
    fs::path train_path;
    fs::path test_path;
    LabeledSeries train;
    LabeledSeries test;
};

LabeledSeries load_with_optional_labels(const fs::path& path, const std::string& column) {
    const auto header = read_csv_header(path);
    const bool has = std::find(header.begin(), header.end(), column) != header.end();
    return load_csv(path, has ? std::optional<std::string>(column) : std::nullopt);
}

/// --data names a directory holding train.csv and test.csv.
Dataset load_dataset(const Options& o, Manifest& manifest) {
    if (o.data.empty()) {
        throw ArgumentError("--data is required (a directory with train.csv and test.csv)");
    }
    Dataset d;
    d.train_path = fs::path(o.data) / "train.csv";
    d.test_path = fs::path(o.data) / "test.csv";
    d.train = load_with_optional_labels(d.train_path, o.labels_column);
    d.test = load_with_optional_labels(d.test_path, o.labels_column);
    manifest.dataset("train", d.train_path);
    manifest.dataset("test", d.test_path);
    manifest["labels_column"] = o.labels_column;
    return d;
}

GraphCaches caches_for(const PreparedData& prepared, const TrainConfig& config, const Options& o,
                       Manifest& manifest) {
    if (o.graphs.empty()) {
        return build_caches(prepared, config, true);
    }
    GraphCaches caches = build_caches(prepared, config, false);
    const fs::path dir = o.graphs;
    fill_cache_from_store(load_graph_store(dir / "graphs_train.bin"), *caches.train);
    fill_cache_from_store(load_graph_store(dir / "graphs_test.bin"), *caches.test);
    manifest.dataset("graphs_train", dir / "graphs_train.bin");
    manifest.dataset("graphs_test", dir / "graphs_test.bin");
    return caches;
}

void write_summary(const fs::path& path, const DetectionSummary& s, std::optional<double> val_threshold,
                   bool scaled) {
    std::vector<std::pair<std::string, EvalReport>> reports = {{"combined", s.combined_adjusted},
                                                               {"combined_raw", s.combined_raw},
                                                               {"ts_only", s.ts_adjusted},
                                                               {"graph_only", s.graph_adjusted}};
    if (s.at_val_threshold) {
        reports.emplace_back("combined_at_val_threshold", *s.at_val_threshold);
    }
    write_eval_report(path, reports, scaled ? std::nullopt : val_threshold);
    json doc = read_json(path);
    doc["scaled"] = scaled;
    write_json(path, doc);
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
}

// ---- subcommands -----------------------------------------------------------

int cmd_synth(const Options& o) {
    const fs::path out = require_out(o);
    Manifest manifest("synth", out);
    SynthSpec spec;
    spec.seed = o.seed.value_or(0);
    const SynthData data = generate(spec);
    write_csv(out / "train.csv", data.train, o.labels_column);
    write_csv(out / "test.csv", data.test, o.labels_column);
    save_manifest(out / "anomalies.json", data);
    manifest["seed"] = spec.seed;
    for (const char* name : {"train.csv", "test.csv", "anomalies.json"}) {
        manifest.artifact(name);
    }
    manifest.save();
    std::cout << "wrote " << data.anomalies.size() << " anomalies to " << out.string() << '\n';
    return 0;
}

int cmd_prep(const Options& o) {
    const fs::path out = require_out(o);
    Manifest manifest("prep", out);
    const TrainConfig config = effective_config(o);
    manifest.config(config);
    const Dataset d = load_dataset(o, manifest);
    const PreparedData prepared = prepare_data(d.train, d.test, config.downsample);
    write_csv(out / "train.csv", prepared.train, o.labels_column);
    write_csv(out / "test.csv", prepared.test, o.labels_column);
    save_norm_stats(out / "norm_stats.json", prepared.stats);
    for (const char* name : {"train.csv", "test.csv", "norm_stats.json"}) {
        manifest.artifact(name);
    }
    manifest.save();
    return 0;
}

int cmd_build_graphs(const Options& o) {
    const fs::path out = require_out(o);
    Manifest manifest("build-graphs", out);
    const TrainConfig config = effective_config(o);
    manifest.config(config);
    apply_kernel_flag(o, manifest);
    const Dataset d = load_dataset(o, manifest);
    const PreparedData prepared = prepare_data(d.train, d.test, config.downsample);
    const GraphCaches caches = build_caches(prepared, config, true);
    save_graph_store(out / "graphs_train.bin", store_from_cache(*caches.train));
    save_graph_store(out / "graphs_test.bin", store_from_cache(*caches.test));
    manifest.artifact("graphs_train.bin");
    manifest.artifact("graphs_test.bin");
    manifest.save();
    std::cout << "stored " << caches.train->size() << " train and " << caches.test->size() << " test graphs\n";
    return 0;
}

/// Trains, scores both splits and evaluates when the test split has labels.
Experiment train_into(const fs::path& out, const Dataset& d, const TrainConfig& config, const Options& o,
                      Manifest& manifest) {
    const PreparedData prepared = prepare_data(d.train, d.test, config.downsample);
    GraphCaches caches = caches_for(prepared, config, o, manifest);
    Experiment ex = run_experiment(prepared, caches, config, &std::cout);

    save_train_config(out / "config.txt", config);
    ex.model->save(out / "model.ckpt");
    save_norm_stats(out / "norm_stats.json", prepared.stats);
    save_train_report(out / "train_report.json", out / "train_log.csv", ex.report);
    write_scores(out / "scores.csv", ex.test_scores, prepared.test.labels);
    write_scores(out / "train_scores.csv", ex.train_scores, std::nullopt);
    manifest["checkpoint"] = "model.ckpt";
    manifest["val_threshold"] = ex.val_threshold;
    for (const char* name :
         {"config.txt", "model.ckpt", "norm_stats.json", "train_report.json", "train_log.csv", "scores.csv",
          "train_scores.csv"}) {
        manifest.artifact(name);
    }
    if (prepared.test.labels) {
        const auto summary = summarize_detection(ex.test_scores, *prepared.test.labels, ex.val_threshold,
                                                 o.scale_scores, &ex.train_scores);
        write_summary(out / "eval_report.json", summary, ex.val_threshold, o.scale_scores);
        manifest.artifact("eval_report.json");
    }
    return ex;
}

int cmd_train(const Options& o) {
    const fs::path out = require_out(o);
    Manifest manifest("train", out);
    const TrainConfig config = effective_config(o);
    manifest.config(config);
    apply_kernel_flag(o, manifest);
    const Dataset d = load_dataset(o, manifest);
    const Experiment ex = train_into(out, d, config, o, manifest);
    manifest.save();
    std::cout << "best epoch " << ex.report.best_epoch << ", val loss " << ex.report.best_val << '\n';
    return 0;
}

fs::path require_run(const Options& o) {
    if (o.run.empty()) {
        throw ArgumentError("--run is required (a directory written by 'train')");
    }
    return o.run;
}

int cmd_score(const Options& o) {
    const fs::path run = require_run(o);
    const fs::path out = require_out(o);
    Manifest manifest("score", out);
    if (o.seed || o.tau || o.stride || !o.config.empty()) {
        throw ConfigError("score uses the configuration stored in --run; --config, --seed, --tau and --stride "
                          "do not apply");
    }
    const TrainConfig config = load_train_config(run / "config.txt");
    manifest.config(config);
    apply_kernel_flag(o, manifest);
    const Dataset d = load_dataset(o, manifest);
    const NormStats stats = load_norm_stats(run / "norm_stats.json");
    const LabeledSeries test = minmax_normalize(downsample_median(d.test, config.downsample), stats);
    Model model(config.model_config(test.num_series()), config.seed);
    model.load(run / "model.ckpt");
    GraphCache cache(test.num_series(), config.w, config.tau, 0, config.dtw_band);
    populate_cache(test, cache);
    const ScoreSeries scores = score(model, test, cache);
    write_scores(out / "scores.csv", scores, test.labels);
    manifest.dataset("checkpoint", run / "model.ckpt");
    manifest.artifact("scores.csv");
    manifest.save();
    return 0;
}

/// Rebuilds a ScoreSeries (means only) from a scores.csv written by write_scores.
ScoreSeries read_scores(const fs::path& path, std::size_t window, std::optional<std::vector<int>>* labels) {
    const auto header = read_csv_header(path);
    const bool labeled = std::find(header.begin(), header.end(), "label") != header.end();
    LabeledSeries table = load_csv(path, labeled ? std::optional<std::string>("label") : std::nullopt);
    auto column = [&](const std::string& name) {
        const auto it = std::find(table.series_names.begin(), table.series_names.end(), name);
        if (it == table.series_names.end()) {
            throw LoadError(path.string() + ": missing column '" + name + "'");
        }
        const auto row = static_cast<std::size_t>(it - table.series_names.begin());
        std::vector<double> v(table.length());
        for (std::size_t t = 0; t < v.size(); ++t) {
            v[t] = table.at(row, t);
        }
        return v;
    };
    ScoreSeries s;
    s.num_series = 1;
    s.ts_mean = column("err_ts");
    s.graph_mean = column("err_graph");
    s.combined_mean = column("combined");
    s.valid.assign(table.length(), 0);
    for (std::size_t t = window; t < table.length(); ++t) {
        s.valid[t] = 1;
    }
    if (labels != nullptr) {
        *labels = table.labels;
    }
    return s;
}

int cmd_eval(const Options& o) {
    const fs::path run = require_run(o);
    const fs::path out = o.out.empty() ? run : require_out(o);
    Manifest manifest("eval", out, out == run);
    const TrainConfig config = load_train_config(run / "config.txt");
    manifest.config(config);
    std::optional<std::vector<int>> labels;
    const ScoreSeries test = read_scores(run / "scores.csv", config.m * config.w, &labels);
    if (!labels) {
        throw LoadError((run / "scores.csv").string() + ": no label column, nothing to evaluate against");
    }
    std::optional<ScoreSeries> train_scores;
    if (o.scale_scores) {
        train_scores = read_scores(run / "train_scores.csv", config.m * config.w, nullptr);
    }
    std::optional<double> val_threshold;
    if (fs::exists(run / "manifest.json")) {
        const json m = read_json(run / "manifest.json");
        if (m.contains("val_threshold")) {
            val_threshold = m["val_threshold"].get<double>();
        }
    }
    const auto summary = summarize_detection(test, *labels, val_threshold, o.scale_scores,
                                             train_scores ? &*train_scores : nullptr);
    write_summary(out / "eval_report.json", summary, val_threshold, o.scale_scores);
    manifest.dataset("scores", run / "scores.csv");
    manifest.artifact("eval_report.json");
    manifest.save();
    std::cout << "point-adjusted F1 " << fmt(summary.combined_adjusted.f1) << " (P "
              << fmt(summary.combined_adjusted.precision) << ", R " << fmt(summary.combined_adjusted.recall)
              << ")\n";
    return 0;
}

struct AblationRow {
    const char* name;
    Ablation ablation;
};

std::vector<AblationRow> ablation_rows() {
    std::vector<AblationRow> rows(8);
    rows[0].name = "full";
    rows[1].name = "wo_ts";
    rows[1].ablation.wo_ts = true;
    rows[2].name = "wo_graph";
    rows[2].ablation.wo_graph = true;
    rows[3].name = "graph_recent_only";
    rows[3].ablation.recent_graph_only = true;
    rows[4].name = "graph_wo_recent";
    rows[4].ablation.wo_recent_graph = true;
    rows[5].name = "graph_wo_recent_and_static";
    rows[5].ablation.wo_recent_and_static = true;
    rows[6].name = "ts_wo_static";
    rows[6].ablation.wo_static_graph = true;
    rows[7].name = "ts_wo_static_and_dynamic";
    rows[7].ablation.wo_static_and_dynamic = true;
    return rows;
}

/// One labeled experiment per setting, each in its own subdirectory, plus a comparison table.
int run_grid(const Options& o, const std::string& command, const std::vector<std::pair<std::string, TrainConfig>>& grid,
             const fs::path& out, Manifest& manifest, const Dataset& d, const std::string& table_name) {
    std::ofstream csv(out / (table_name + ".csv"));
    std::ofstream md(out / (table_name + ".md"));
    if (!csv || !md) {
        throw LoadError("cannot write tables in " + out.string());
    }
    csv << "setting,f1_adjusted,precision,recall,f1_raw,best_epoch,best_val\n" << std::setprecision(17);
    md << "| setting | F1 (adjusted) | precision | recall | F1 (raw) |\n|---|---|---|---|---|\n";
    if (!d.test.labels) {
        throw LoadError(command + " needs a labeled test split");
    }
    for (const auto& [name, config] : grid) {
        std::cout << "== " << name << '\n';
        const fs::path sub = out / name;
        fs::create_directories(sub);
        Manifest sub_manifest(command + ":" + name, sub);
        sub_manifest.config(config);
        sub_manifest.dataset("train", d.train_path);
        sub_manifest.dataset("test", d.test_path);
        const Experiment ex = train_into(sub, d, config, o, sub_manifest);
        sub_manifest.save();
        const json report = read_json(sub / "eval_report.json");
        const auto& adj = report["combined"];
        csv << name << ',' << adj["F1"].get<double>() << ',' << adj["precision"].get<double>() << ','
            << adj["recall"].get<double>() << ',' << report["combined_raw"]["F1"].get<double>() << ','
            << ex.report.best_epoch << ',' << ex.report.best_val << '\n';
        md << "| " << name << " | " << fmt(adj["F1"].get<double>()) << " | " << fmt(adj["precision"].get<double>())
           << " | " << fmt(adj["recall"].get<double>()) << " | " << fmt(report["combined_raw"]["F1"].get<double>())
           << " |\n";
        manifest.artifact(name + "/");
    }
    manifest.artifact(table_name + ".csv");
    manifest.artifact(table_name + ".md");
    manifest.save();
    std::cout << "table written to " << (out / (table_name + ".md")).string() << '\n';
    return 0;
}

int cmd_ablate(const Options& o) {
    const fs::path out = require_out(o);
    Manifest manifest("ablate", out);
    const TrainConfig base = effective_config(o);
    manifest.config(base);
    apply_kernel_flag(o, manifest);
    const Dataset d = load_dataset(o, manifest);
    const Ablation none;
    if (base.ablation.describe() != none.describe()) {
        throw ConfigError("ablate sets the ablation flags itself; remove them from --config");
    }
    std::vector<std::pair<std::string, TrainConfig>> grid;
    for (const auto& row : ablation_rows()) {
        TrainConfig c = base;
        c.ablation = row.ablation;
        c.validate();
        grid.emplace_back(row.name, c);
    }
    return run_grid(o, "ablate", grid, out, manifest, d, "ablation");
}

int cmd_tau_sweep(const Options& o) {
    if (o.tau) {
        throw ConfigError("--tau cannot be combined with tau-sweep, which sets tau itself");
    }
    if (!o.graphs.empty()) {
        throw ConfigError("--graphs cannot be combined with tau-sweep: a graph store holds a single tau");
    }
    const fs::path out = require_out(o);
    Manifest manifest("tau-sweep", out);
    const TrainConfig base = effective_config(o);
    manifest.config(base);
    apply_kernel_flag(o, manifest);
    const Dataset d = load_dataset(o, manifest);
    std::vector<std::pair<std::string, TrainConfig>> grid;
    for (const double tau : {0.1, 0.5, 1.0, 5.0, 10.0}) {
        TrainConfig c = base;
        c.tau = tau;
        std::ostringstream name;
        name << "tau_" << tau;
        grid.emplace_back(name.str(), c);
    }
    return run_grid(o, "tau-sweep", grid, out, manifest, d, "tau_sweep");
}

int cmd_gradcheck(const Options& o) {
    const fs::path out = require_out(o);
    Manifest manifest("gradcheck", out);
    GradcheckOptions options;
    options.seed = o.seed.value_or(0);
    const GradcheckReport report = gradcheck(options);
    json doc;
    doc["passed"] = report.passed;
    doc["tolerance"] = options.tolerance;
    doc["groups"] = json::array();
    for (const auto& g : report.groups) {
        doc["groups"].push_back({{"name", g.name},
                                 {"entries", g.entries},
                                 {"max_abs_error", g.max_abs_error},
                                 {"max_rel_error", g.max_rel_error},
                                 {"passed", g.passed}});
        std::cout << (g.passed ? "ok   " : "FAIL ") << g.name << "  rel " << g.max_rel_error << '\n';
    }
    write_json(out / "gradcheck.json", doc);
    manifest["seed"] = options.seed;
    manifest.artifact("gradcheck.json");
    manifest.save();
    if (!report.passed) {
        std::cerr << "error: gradient check failed for " << report.failed_groups.size() << " parameter group(s)\n";
        return 1;
    }
    return 0;
}

// Minimal SVG line chart: one panel per score with the threshold drawn on the combined panel.
void write_svg(const fs::path& path, const std::vector<std::pair<std::string, std::vector<double>>>& panels,
               const std::vector<int>& labels, double threshold, std::size_t first_valid) {
    const double width = 1200;
    const double panel_h = 180;
    const double margin = 40;
    std::ofstream svg(path);
    if (!svg) {
        throw LoadError("cannot write " + path.string());
    }
    const double height = panels.size() * (panel_h + margin) + margin;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const std::size_t steps = panels.front().second.size();
    const double plot_w = width - 2 * margin;
    auto x_of = [&](std::size_t t) { return margin + plot_w * static_cast<double>(t) / std::max<double>(1, steps - 1); };
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const auto& [name, values] = panels[p];
        const double top = margin + p * (panel_h + margin);
        double hi = 0.0;
        for (std::size_t t = first_valid; t < steps; ++t) {
            hi = std::max(hi, values[t]);
        }
        if (p == 0) {
            hi = std::max(hi, threshold);
        }
        hi = hi > 0.0 ? hi : 1.0;
        auto y_of = [&](double v) { return top + panel_h * (1.0 - std::clamp(v / hi, 0.0, 1.0)); };
        // Labeled stretches as shaded bands.
        for (std::size_t t = 0; t < labels.size() && t < steps; ++t) {
            if (labels[t] != 0 && (t == 0 || labels[t - 1] == 0)) {
                std::size_t e = t;
                while (e + 1 < labels.size() && labels[e + 1] != 0) {
                    ++e;
                }
                svg << "<rect x=\"" << x_of(t) << "\" y=\"" << top << "\" width=\"" << std::max(1.0, x_of(e) - x_of(t))
                    << "\" height=\"" << panel_h << "\" fill=\"#f4b6b6\"/>\n";
            }
        }
        svg << "<text x=\"" << margin << "\" y=\"" << top - 6 << "\" font-family=\"sans-serif\" font-size=\"13\">"
            << name << " (max " << hi << ")</text>\n";
        svg << "<rect x=\"" << margin << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << panel_h
            << "\" fill=\"none\" stroke=\"#888\"/>\n<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"0.8\" points=\"";
        for (std::size_t t = first_valid; t < steps; ++t) {
            svg << x_of(t) << ',' << y_of(values[t]) << ' ';
        }
        svg << "\"/>\n";
        if (p == 0) {
            svg << "<line x1=\"" << margin << "\" x2=\"" << margin + plot_w << "\" y1=\"" << y_of(threshold)
                << "\" y2=\"" << y_of(threshold) << "\" stroke=\"#c0392b\" stroke-dasharray=\"6,4\"/>\n";
        }
    }
    svg << "</svg>\n";
}

int cmd_plot(const Options& o) {
    const fs::path run = require_run(o);
    const fs::path out = o.out.empty() ? run : require_out(o);
    Manifest manifest("plot", out, out == run);
    const TrainConfig config = load_train_config(run / "config.txt");
    const std::size_t c = config.m * config.w;
    std::optional<std::vector<int>> labels;
    ScoreSeries s = read_scores(run / "scores.csv", c, &labels);
    const json report = read_json(run / "eval_report.json");
    const double threshold = report["combined"]["threshold"].get<double>();
    if (report.value("scaled", false)) {
        const ScoreSeries train = read_scores(run / "train_scores.csv", c, nullptr);
        auto rescale = [&](std::vector<double>& values, const std::vector<double>& reference) {
            std::vector<double> valid_ref;
            for (std::size_t t = c; t < reference.size(); ++t) {
                valid_ref.push_back(reference[t]);
            }
            std::vector<double> tail(values.begin() + static_cast<long>(c), values.end());
            tail = iqr_scale(tail, valid_ref);
            std::copy(tail.begin(), tail.end(), values.begin() + static_cast<long>(c));
        };
        rescale(s.combined_mean, train.combined_mean);
        rescale(s.ts_mean, train.ts_mean);
        rescale(s.graph_mean, train.graph_mean);
    }
    fs::create_directories(out / "plots");
    write_svg(out / "plots" / "scores.svg",
              {{"combined", s.combined_mean}, {"series error", s.ts_mean}, {"graph error", s.graph_mean}},
              labels.value_or(std::vector<int>{}), threshold, c);
    manifest.dataset("scores", run / "scores.csv");
    manifest.artifact("plots/scores.svg");
    manifest.save();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint series and correlation-graph forecasting for anomaly detection"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "Training configuration file (key = value lines)");
    app.add_option("--data", o.data, "Directory with train.csv and test.csv");
    app.add_option("--labels-column", o.labels_column, "Name of the 0/1 label column")->capture_default_str();
    app.add_option("--out", o.out, "Output run directory");
    app.add_option("--run", o.run, "Existing run directory (score, eval, plot)");
    app.add_option("--graphs", o.graphs, "Directory written by build-graphs (train, ablate)");
    app.add_option("--seed", o.seed, "Seed override");
    app.add_option("--tau", o.tau, "DTW temperature override")->check(CLI::PositiveNumber);
    app.add_option("--stride", o.stride, "Window stride override")->check(CLI::PositiveNumber);
    app.add_option("--use-native-kernel", o.kernel, "Graph kernel selection")
        ->check(CLI::IsMember({"auto", "on", "off"}))
        ->capture_default_str();
    app.add_flag("--scale-scores", o.scale_scores, "Robust (median/IQR) score scaling before thresholding");

    struct Sub {
        const char* name;
        const char* help;
        int (*fn)(const Options&);
    };
    const std::vector<Sub> subs = {
        {"synth", "Generate the synthetic benchmark", cmd_synth},
        {"prep", "Down-sample and normalize a dataset", cmd_prep},
        {"build-graphs", "Precompute correlation graphs into a graph store", cmd_build_graphs},
        {"train", "Train, score and evaluate", cmd_train},
        {"score", "Score a dataset with a trained run", cmd_score},
        {"eval", "Best-F1 evaluation of a scored run", cmd_eval},
        {"ablate", "Train the eight ablation settings and tabulate them", cmd_ablate},
        {"tau-sweep", "Train once per tau in {0.1, 0.5, 1, 5, 10}", cmd_tau_sweep},
        {"gradcheck", "Finite-difference gradient check of every parameter group", cmd_gradcheck},
        {"plot", "Score-versus-time SVG with the chosen threshold", cmd_plot},
    };
    for (const auto& s : subs) {
        app.add_subcommand(s.name, s.help);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        for (const auto& s : subs) {
            if (app.got_subcommand(s.name)) {
                return s.fn(o);
            }
        }
    } catch (const std::exception& e) {
        std::string message = e.what();
        std::replace(message.begin(), message.end(), '\n', ' ');
        std::cerr << "error: " << message << '\n';
        return 1;
    }
    return 1;
}
