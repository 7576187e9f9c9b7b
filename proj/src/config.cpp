#include "dygraph/config.hpp"

#include "dygraph/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dygraph {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& text) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
    }
    return value;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
    Int value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + text + "'");
    }
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") {
        return true;
    }
    if (text == "false" || text == "0") {
        return false;
    }
    throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::string format_double(double v) {
    char buffer[64];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
    return std::string(buffer, ptr);
}

struct Field {
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field size_field(T TrainConfig::*member) {
    return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_int<T>(k, v); },
            [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(double TrainConfig::*member) {
    return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); },
            [member](const TrainConfig& c) { return format_double(c.*member); }};
}

Field flag_field(bool Ablation::*member) {
    return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
                c.ablation.*member = parse_bool(k, v);
            },
            [member](const TrainConfig& c) { return std::string(c.ablation.*member ? "true" : "false"); }};
}

// Ordered as they are written out.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"lr", double_field(&TrainConfig::lr)},
        {"epochs", size_field(&TrainConfig::epochs)},
        {"batch_size", size_field(&TrainConfig::batch_size)},
        {"seed", size_field(&TrainConfig::seed)},
        {"wo_ts", flag_field(&Ablation::wo_ts)},
        {"wo_graph", flag_field(&Ablation::wo_graph)},
        {"recent_graph_only", flag_field(&Ablation::recent_graph_only)},
        {"wo_recent_graph", flag_field(&Ablation::wo_recent_graph)},
        {"wo_static_graph", flag_field(&Ablation::wo_static_graph)},
        {"wo_recent_and_static", flag_field(&Ablation::wo_recent_and_static)},
        {"wo_static_and_dynamic", flag_field(&Ablation::wo_static_and_dynamic)},
        {"d", size_field(&TrainConfig::d)},
        {"L", size_field(&TrainConfig::L)},
        {"m", size_field(&TrainConfig::m)},
        {"w", size_field(&TrainConfig::w)},
        {"tau", double_field(&TrainConfig::tau)},
        {"stride", size_field(&TrainConfig::stride)},
        {"heads", size_field(&TrainConfig::heads)},
        {"val_fraction", double_field(&TrainConfig::val_fraction)},
        {"grad_clip", double_field(&TrainConfig::grad_clip)},
        {"lr_decay", double_field(&TrainConfig::lr_decay)},
        {"downsample", {[](TrainConfig& c, const std::string& k, const std::string& v) {
                            c.downsample = parse_int<int>(k, v);
                        },
                        [](const TrainConfig& c) { return std::to_string(c.downsample); }}},
        {"mixhop_depth", size_field(&TrainConfig::mixhop_depth)},
        {"mixhop_beta", double_field(&TrainConfig::mixhop_beta)},
        {"dil_layers", size_field(&TrainConfig::dil_layers)},
        {"dtw_band", size_field(&TrainConfig::dtw_band)},
    };
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& [name, field] : fields()) {
        if (name == key) {
            return &field;
        }
    }
    return nullptr;
}

std::string key_list() {
    std::string out;
    for (const auto& [name, field] : fields()) {
        out += (out.empty() ? "" : ", ") + name;
    }
    return out;
}

} // namespace

ModelConfig TrainConfig::model_config(std::size_t num_series) const {
    ModelConfig mc;
    mc.num_series = num_series;
    mc.d = d;
    mc.layers = L;
    mc.heads = heads;
    mc.m = m;
    mc.w = w;
    mc.mixhop_depth = mixhop_depth;
    mc.mixhop_beta = mixhop_beta;
    mc.inception_layers = dil_layers;
    mc.ablation = ablation;
    return mc;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) {
        throw ConfigError("lr must be positive");
    }
    if (epochs == 0 || batch_size == 0 || stride == 0) {
        throw ConfigError("epochs, batch_size and stride must be >= 1");
    }
    if (!(tau > 0.0)) {
        throw ConfigError("tau must be positive");
    }
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ConfigError("val_fraction must be in (0, 1)");
    }
    if (grad_clip < 0.0) {
        throw ConfigError("grad_clip must be >= 0 (0 disables clipping)");
    }
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
        throw ConfigError("lr_decay must be in (0, 1]");
    }
    if (downsample < 1) {
        throw ConfigError("downsample must be >= 1");
    }
    // Structural checks that do not depend on N.
    model_config(1).validate();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
    const Field* field = find_field(key);
    if (field == nullptr) {
        throw ConfigError("unknown config key '" + key + "'; valid keys: " + key_list());
    }
    field->set(*this, key, value);
}

std::string TrainConfig::get(const std::string& key) const {
    const Field* field = find_field(key);
    if (field == nullptr) {
        throw ConfigError("unknown config key '" + key + "'; valid keys: " + key_list());
    }
    return field->get(*this);
}

const std::vector<std::string>& TrainConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [name, field] : fields()) {
            out.push_back(name);
        }
        return out;
    }();
    return names;
}

TrainConfig parse_train_config(const std::string& text, const std::string& origin) {
    TrainConfig config;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            config.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    config.validate();
    return config;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_train_config(buffer.str(), path.string());
}

std::string format_train_config(const TrainConfig& config) {
    std::string out;
    for (const auto& [name, field] : fields()) {
        out += name + " = " + field.get(config) + "\n";
    }
    return out;
}

void save_train_config(const std::filesystem::path& path, const TrainConfig& config) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    out << format_train_config(config);
}

} // namespace dygraph
