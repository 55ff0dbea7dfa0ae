#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "idccp/backbone.hpp"
#include "idccp/covariance.hpp"
#include "idccp/error.hpp"

namespace idccp {

enum class LrSchedule { exponential, two_phase };

// Flat training configuration. Defaults give the toy synthetic run.
struct TrainConfig {
    std::uint64_t seed = 1;
    std::size_t image_size = 32;
    std::size_t channels = 1;
    std::string backbone;  // empty: default_backbone_spec(feature_dim)
    std::size_t feature_dim = 32;
    std::size_t compressed_dim = 16; // equal to feature_dim disables compression
    std::size_t newton_schulz_iters = 5;
    std::size_t classes = 4;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    double lr_initial = 0.1;
    double lr_finetune = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double lr_decay_factor = 0.9;
    std::size_t lr_decay_every_epochs = 10;
    double epsilon_scale = 1e-5;
    double grad_clip = 1.0; // global gradient norm cap, 0 disables
    bool augment_flip = false;
    bool augment_crop = false;
    std::string dataset = "synthetic"; // or a class-per-directory folder
    std::size_t n_per_class = 200;
    double train_ratio = 0.5;
    LrSchedule schedule = LrSchedule::exponential;
    std::size_t head_epochs = 0; // two_phase only: epochs with a frozen backbone
    PoolingMode pooling = PoolingMode::group_average;
    std::size_t invariance_samples = 8; // held-out images probed per epoch

    std::string backbone_spec() const {
        return backbone.empty() ? default_backbone_spec(feature_dim) : backbone;
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config: invalid value '" + v + "' for " + key);
    }
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: invalid boolean '" + v + "' for " + key);
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct ConfigField {
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define IDCCP_UINT_FIELD(name)                                                              \
    {#name, {[](TrainConfig& c, const std::string& v) {                                     \
                 c.name = parse_number<decltype(c.name)>(#name, v);                         \
             },                                                                             \
             [](const TrainConfig& c) { return std::to_string(c.name); }}}
#define IDCCP_DOUBLE_FIELD(name)                                                            \
    {#name, {[](TrainConfig& c, const std::string& v) { c.name = parse_number<double>(#name, v); }, \
             [](const TrainConfig& c) { return format_double(c.name); }}}
#define IDCCP_BOOL_FIELD(name)                                                              \
    {#name, {[](TrainConfig& c, const std::string& v) { c.name = parse_bool(#name, v); },   \
             [](const TrainConfig& c) { return std::string(c.name ? "true" : "false"); }}}

// Keys in the order they are written.
inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
    static const std::vector<std::pair<std::string, ConfigField>> fields{
        IDCCP_UINT_FIELD(seed),
        IDCCP_UINT_FIELD(image_size),
        IDCCP_UINT_FIELD(channels),
        {"backbone",
         {[](TrainConfig& c, const std::string& v) { c.backbone = v; },
          [](const TrainConfig& c) { return c.backbone; }}},
        IDCCP_UINT_FIELD(feature_dim),
        IDCCP_UINT_FIELD(compressed_dim),
        IDCCP_UINT_FIELD(newton_schulz_iters),
        IDCCP_UINT_FIELD(classes),
        IDCCP_UINT_FIELD(batch_size),
        IDCCP_UINT_FIELD(epochs),
        IDCCP_DOUBLE_FIELD(lr_initial),
        IDCCP_DOUBLE_FIELD(lr_finetune),
        IDCCP_DOUBLE_FIELD(momentum),
        IDCCP_DOUBLE_FIELD(weight_decay),
        IDCCP_DOUBLE_FIELD(lr_decay_factor),
        IDCCP_UINT_FIELD(lr_decay_every_epochs),
        IDCCP_DOUBLE_FIELD(epsilon_scale),
        IDCCP_DOUBLE_FIELD(grad_clip),
        IDCCP_BOOL_FIELD(augment_flip),
        IDCCP_BOOL_FIELD(augment_crop),
        {"dataset",
         {[](TrainConfig& c, const std::string& v) { c.dataset = v; },
          [](const TrainConfig& c) { return c.dataset; }}},
        IDCCP_UINT_FIELD(n_per_class),
        IDCCP_DOUBLE_FIELD(train_ratio),
        {"schedule",
         {[](TrainConfig& c, const std::string& v) {
              if (v == "exponential") c.schedule = LrSchedule::exponential;
              else if (v == "two_phase") c.schedule = LrSchedule::two_phase;
              else throw ConfigError("config: schedule must be exponential or two_phase, got '" + v + "'");
          },
          [](const TrainConfig& c) {
              return std::string(c.schedule == LrSchedule::exponential ? "exponential" : "two_phase");
          }}},
        IDCCP_UINT_FIELD(head_epochs),
        {"pooling",
         {[](TrainConfig& c, const std::string& v) {
              if (v == "group_average") c.pooling = PoolingMode::group_average;
              else if (v == "identity_only") c.pooling = PoolingMode::identity_only;
              else throw ConfigError("config: pooling must be group_average or identity_only, got '" + v + "'");
          },
          [](const TrainConfig& c) {
              return std::string(c.pooling == PoolingMode::group_average ? "group_average"
                                                                         : "identity_only");
          }}},
        IDCCP_UINT_FIELD(invariance_samples),
    };
    return fields;
}

#undef IDCCP_UINT_FIELD
#undef IDCCP_DOUBLE_FIELD
#undef IDCCP_BOOL_FIELD

} // namespace detail

// Throws ConfigError naming the first violated constraint.
inline void validate(const TrainConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (c.channels < 1) fail("channels must be at least 1");
    if (c.image_size < 2) fail("image_size must be at least 2");
    if (c.classes < 2) fail("classes must be at least 2");
    if (c.batch_size < 1) fail("batch_size must be at least 1");
    if (c.newton_schulz_iters < 1) fail("newton_schulz_iters must be at least 1");
    if (c.compressed_dim < 1 || c.compressed_dim > c.feature_dim) {
        fail("compressed_dim must be in [1, feature_dim]");
    }
    for (auto [name, v] : {std::pair{"lr_initial", c.lr_initial}, std::pair{"lr_finetune", c.lr_finetune},
                           std::pair{"epsilon_scale", c.epsilon_scale}}) {
        if (!(v > 0.0)) fail(std::string(name) + " must be positive");
    }
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum must be in [0, 1)");
    if (!(c.weight_decay >= 0.0)) fail("weight_decay must be nonnegative");
    if (!(c.grad_clip >= 0.0)) fail("grad_clip must be nonnegative");
    if (!(c.lr_decay_factor > 0.0 && c.lr_decay_factor <= 1.0)) fail("lr_decay_factor must be in (0, 1]");
    if (c.lr_decay_every_epochs < 1) fail("lr_decay_every_epochs must be at least 1");
    if (!(c.train_ratio > 0.0 && c.train_ratio < 1.0)) fail("train_ratio must be in (0, 1)");
    if (c.dataset.empty()) fail("dataset must be 'synthetic' or a folder path");
    if (c.dataset == "synthetic") {
        if (c.classes > 16) fail("synthetic data supports at most 16 classes");
        if (c.image_size < 16) fail("synthetic data needs image_size >= 16");
        if (c.channels != 1) fail("synthetic data is single-channel");
    }
    const auto layers = parse_layer_specs(c.backbone_spec());
    const auto& last = layers.back();
    if (last.out_channels != c.feature_dim) {
        fail("backbone ends with " + std::to_string(last.out_channels) +
             " channels but feature_dim is " + std::to_string(c.feature_dim));
    }
}

// key = value lines, '#' starts a comment. Unknown or repeated keys are errors.
inline TrainConfig parse_config(const std::string& text) {
    TrainConfig c;
    std::map<std::string, const detail::ConfigField*> lookup;
    for (const auto& [k, f] : detail::config_fields()) lookup[k] = &f;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const auto it = lookup.find(key);
        if (it == lookup.end()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        if (seen[key]++) {
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        it->second->set(c, value);
    }
    validate(c);
    return c;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// Every key, in a fixed order; parse_config(format_config(c)) == c.
inline std::string format_config(const TrainConfig& c) {
    std::string out;
    for (const auto& [k, f] : detail::config_fields()) out += k + " = " + f.get(c) + "\n";
    return out;
}

} // namespace idccp
