#ifndef POINTNORM_CONFIG_HPP
#define POINTNORM_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "pointnorm/backbones.hpp"
#include "pointnorm/dataset.hpp"
#include "pointnorm/engine.hpp"
#include "pointnorm/error.hpp"
#include "pointnorm/normalizers.hpp"
#include "pointnorm/synthgen.hpp"

namespace pointnorm {

/// Horizon -> lookback pairs of the benchmark protocol.
inline std::optional<std::size_t> protocol_lookback(std::size_t horizon) {
    static const std::map<std::size_t, std::size_t> preset{{24, 24},   {48, 48},   {96, 72},  {168, 96},
                                                           {192, 120}, {336, 192}, {720, 360}};
    const auto it = preset.find(horizon);
    if (it == preset.end()) return std::nullopt;
    return it->second;
}

enum class DatasetKind { synth, csv };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::synth;
    std::string path;  // resolved csv path
    bool timestamp = false;
    std::size_t max_features = 0;
    SynthConfig synth;
};

struct GradCheckConfig {
    double step = 1e-5;
    std::size_t batch = 4;
    std::size_t max_params = 10000;
    double param_scale = 0.1;
};

/// One experiment, fully resolved with defaults.
struct ExperimentConfig {
    DatasetConfig dataset;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t stride = 1;
    SplitRatios split;
    NormalizerSpec normalizer;
    BackboneSpec backbone;
    TrainConfig train;
    GradCheckConfig gradcheck;
    std::string out_dir = "runs";
    std::string synth_out = "synth.csv";
    std::vector<std::uint64_t> seeds{0};
    std::map<std::string, std::string> echo;  // canonical key -> value after defaults

    PipelineSpec pipeline_spec(std::size_t features) const {
        return {normalizer, backbone, {lookback, horizon, features}};
    }
};

namespace detail {

inline std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

class KeyValues {
public:
    explicit KeyValues(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string text(const std::string& key, const std::string& fallback) {
        used_.insert(key);
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    template <class T>
    T number(const std::string& key, T fallback) {
        used_.insert(key);
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        T value{};
        const auto& s = it->second;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            throw ConfigError(key, "cannot parse '" + s + "' as a number");
        return value;
    }

    bool flag(const std::string& key, bool fallback) {
        used_.insert(key);
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError(key, "expected true or false, got '" + it->second + "'");
    }

    void reject_unknown() const {
        for (const auto& [k, v] : kv_)
            if (!used_.count(k)) throw ConfigError(k, "unknown configuration key");
    }

private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> used_;
};

template <class T>
std::string to_text(T v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
        char buf[64];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, ptr);
    } else {
        return std::to_string(v);
    }
}

}  // namespace detail

/// Parse `key = value` lines; '#' starts a comment. Later duplicates are rejected.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
        const std::string key = detail::strip(line.substr(0, eq));
        const std::string value = detail::strip(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
        if (!kv.emplace(key, value).second) throw ConfigError(key, "duplicate key");
    }
    return kv;
}

/**
 * Resolve a flat key-value document into an ExperimentConfig.
 *
 * `dataset` is required: `synth`, a path ending in .csv (relative paths resolve
 * against `base_dir`), or a benchmark name looked up as NAME.csv under
 * `dataset.dir` (default: $POINTNORM_DATA_DIR, else ./data).
 */
inline ExperimentConfig resolve_config(const std::map<std::string, std::string>& raw,
                                       const std::filesystem::path& base_dir = ".") {
    detail::KeyValues kv(raw);
    ExperimentConfig c;
    auto& echo = c.echo;

    if (!kv.has("dataset")) throw ConfigError("dataset", "required key missing");
    const std::string dataset = kv.text("dataset", "");
    echo["dataset"] = dataset;
    if (dataset == "synth") {
        c.dataset.kind = DatasetKind::synth;
    } else {
        c.dataset.kind = DatasetKind::csv;
        std::filesystem::path p;
        bool builtin = false;
        if (dataset.size() > 4 && dataset.substr(dataset.size() - 4) == ".csv") {
            p = dataset;
            if (p.is_relative()) p = base_dir / p;
        } else {
            const char* env = std::getenv("POINTNORM_DATA_DIR");
            std::filesystem::path dir;
            if (kv.has("dataset.dir")) {
                dir = kv.text("dataset.dir", "");
                if (dir.is_relative()) dir = base_dir / dir;
            } else {
                dir = env ? std::filesystem::path(env) : base_dir / "data";
            }
            p = dir / (dataset + ".csv");
            builtin = true;
        }
        c.dataset.path = p.lexically_normal().string();
        c.dataset.timestamp = kv.flag("dataset.timestamp", builtin);
        echo["dataset.timestamp"] = detail::to_text(c.dataset.timestamp);
    }
    c.dataset.max_features = kv.number<std::size_t>("dataset.max_features", 0);
    echo["dataset.max_features"] = detail::to_text(c.dataset.max_features);

    auto& s = c.dataset.synth;
    s.length = kv.number<std::size_t>("synth.T", s.length);
    s.features = kv.number<std::size_t>("synth.D", s.features);
    s.regime_len_mean = kv.number<double>("synth.regime_len_mean", s.regime_len_mean);
    s.mean_drift_scale = kv.number<double>("synth.mean_drift_scale", s.mean_drift_scale);
    s.var_drift_scale = kv.number<double>("synth.var_drift_scale", s.var_drift_scale);
    s.ar_coeff = kv.number<double>("synth.ar_coeff", s.ar_coeff);
    s.noise_std = kv.number<double>("synth.noise_std", s.noise_std);
    s.seed = kv.number<std::uint64_t>("synth.seed", s.seed);
    c.synth_out = kv.text("synth.out", c.synth_out);
    if (c.dataset.kind == DatasetKind::synth || kv.has("synth.T")) {
        validate(s);
        echo["synth.T"] = detail::to_text(s.length);
        echo["synth.D"] = detail::to_text(s.features);
        echo["synth.regime_len_mean"] = detail::to_text(s.regime_len_mean);
        echo["synth.mean_drift_scale"] = detail::to_text(s.mean_drift_scale);
        echo["synth.var_drift_scale"] = detail::to_text(s.var_drift_scale);
        echo["synth.ar_coeff"] = detail::to_text(s.ar_coeff);
        echo["synth.noise_std"] = detail::to_text(s.noise_std);
        echo["synth.seed"] = detail::to_text(s.seed);
    }

    c.horizon = kv.number<std::size_t>("window.H", c.horizon);
    const std::string preset = kv.text("window.preset", "none");
    if (preset == "protocol") {
        const auto l = protocol_lookback(c.horizon);
        if (!l) throw ConfigError("window.H", "horizon has no protocol lookback");
        c.lookback = *l;
        if (kv.has("window.L")) throw ConfigError("window.L", "conflicts with window.preset = protocol");
    } else if (preset == "none") {
        c.lookback = kv.number<std::size_t>("window.L", c.lookback);
    } else {
        throw ConfigError("window.preset", "expected 'protocol' or 'none'");
    }
    c.stride = kv.number<std::size_t>("window.stride", c.stride);
    if (c.lookback < 2) throw ConfigError("window.L", "must be at least 2");
    if (c.horizon < 1) throw ConfigError("window.H", "must be at least 1");
    if (c.stride < 1) throw ConfigError("window.stride", "must be at least 1");
    echo["window.L"] = detail::to_text(c.lookback);
    echo["window.H"] = detail::to_text(c.horizon);
    echo["window.stride"] = detail::to_text(c.stride);

    c.split.train = kv.number<double>("split.train", c.split.train);
    c.split.val = kv.number<double>("split.val", c.split.val);
    c.split.test = kv.number<double>("split.test", c.split.test);
    if (!(c.split.train > 0) || !(c.split.test > 0) || c.split.val < 0 ||
        c.split.train + c.split.val + c.split.test > 1.0 + 1e-9)
        throw ConfigError("split", "ratios must be positive (val may be 0) and sum to at most 1");
    echo["split.train"] = detail::to_text(c.split.train);
    echo["split.val"] = detail::to_text(c.split.val);
    echo["split.test"] = detail::to_text(c.split.test);

    auto& n = c.normalizer;
    const std::string method = kv.text("normalizer.method", "zscore");
    const auto m = parse_method(method);
    if (!m) throw ConfigError("normalizer.method", "unknown normalizer '" + method + "'");
    n.method = *m;
    const std::string level = kv.text("normalizer.level", "point");
    if (level == "point") n.level = Level::point;
    else if (level == "instance") n.level = Level::instance;
    else throw ConfigError("normalizer.level", "expected 'point' or 'instance'");
    n.individual = kv.flag("normalizer.individual", n.individual);
    n.centered_input = kv.flag("normalizer.centered_input", n.centered_input);
    n.use_scale = kv.flag("normalizer.use_scale", n.use_scale);
    n.eps = kv.number<double>("normalizer.eps", n.eps);
    if (!(n.eps > 0)) throw ConfigError("normalizer.eps", "must be positive");
    echo["normalizer.method"] = method;
    echo["normalizer.level"] = level;
    echo["normalizer.individual"] = detail::to_text(n.individual);
    echo["normalizer.centered_input"] = detail::to_text(n.centered_input);
    echo["normalizer.use_scale"] = detail::to_text(n.use_scale);
    echo["normalizer.eps"] = detail::to_text(n.eps);

    auto& b = c.backbone;
    const std::string kind = kv.text("backbone.kind", "linear");
    const auto k = parse_backbone(kind);
    if (!k) throw ConfigError("backbone.kind", "unknown backbone '" + kind + "'");
    b.kind = *k;
    b.individual = kv.flag("backbone.individual", b.individual);
    b.kernel = kv.number<std::size_t>("backbone.kernel", b.kernel);
    b.hidden = kv.number<std::size_t>("backbone.hidden", b.hidden);
    if (b.kernel < 1) throw ConfigError("backbone.kernel", "must be at least 1");
    if (b.hidden < 1) throw ConfigError("backbone.hidden", "must be at least 1");
    echo["backbone.kind"] = kind;
    echo["backbone.individual"] = detail::to_text(b.individual);
    echo["backbone.kernel"] = detail::to_text(b.kernel);
    echo["backbone.hidden"] = detail::to_text(b.hidden);

    auto& t = c.train;
    t.lr = kv.number<double>("train.lr", t.lr);
    t.batch_size = kv.number<std::size_t>("train.batch_size", t.batch_size);
    t.max_epochs = kv.number<std::size_t>("train.max_epochs", t.max_epochs);
    t.patience = kv.number<std::size_t>("train.patience", t.patience);
    t.adam_beta1 = kv.number<double>("train.adam_beta1", t.adam_beta1);
    t.adam_beta2 = kv.number<double>("train.adam_beta2", t.adam_beta2);
    t.adam_eps = kv.number<double>("train.adam_eps", t.adam_eps);
    t.freeze_normalizer = kv.flag("train.freeze_normalizer", t.freeze_normalizer);
    t.threads = kv.number<unsigned>("threads", t.threads);
    validate(t);
    echo["train.lr"] = detail::to_text(t.lr);
    echo["train.batch_size"] = detail::to_text(t.batch_size);
    echo["train.max_epochs"] = detail::to_text(t.max_epochs);
    echo["train.patience"] = detail::to_text(t.patience);
    echo["train.adam_beta1"] = detail::to_text(t.adam_beta1);
    echo["train.adam_beta2"] = detail::to_text(t.adam_beta2);
    echo["train.adam_eps"] = detail::to_text(t.adam_eps);
    echo["train.freeze_normalizer"] = detail::to_text(t.freeze_normalizer);

    auto& g = c.gradcheck;
    g.step = kv.number<double>("gradcheck.step", g.step);
    g.batch = kv.number<std::size_t>("gradcheck.batch", g.batch);
    g.max_params = kv.number<std::size_t>("gradcheck.max_params", g.max_params);
    g.param_scale = kv.number<double>("gradcheck.param_scale", g.param_scale);
    if (!(g.step >= 1e-7 && g.step <= 1e-3)) throw ConfigError("gradcheck.step", "must lie in [1e-7, 1e-3]");
    if (g.batch < 1) throw ConfigError("gradcheck.batch", "must be at least 1");

    c.out_dir = kv.text("out", c.out_dir);
    if (kv.has("seeds")) {
        c.seeds.clear();
        std::stringstream ss(kv.text("seeds", ""));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = detail::strip(item);
            std::uint64_t v = 0;
            const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
            if (ec != std::errc{} || ptr != item.data() + item.size())
                throw ConfigError("seeds", "cannot parse '" + item + "' as a seed");
            c.seeds.push_back(v);
        }
        if (c.seeds.empty()) throw ConfigError("seeds", "empty seed list");
    }
    kv.reject_unknown();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path);
    const auto raw = parse_key_values(in);
    return resolve_config(raw, std::filesystem::path(path).parent_path());
}

/// Canonical text of the resolved config; its FNV-1a hash identifies the experiment.
inline std::string canonical_text(const ExperimentConfig& c) {
    std::string out;
    for (const auto& [k, v] : c.echo) out += k + "=" + v + "\n";
    return out;
}

}  // namespace pointnorm

#endif  // POINTNORM_CONFIG_HPP
