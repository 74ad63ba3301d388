#ifndef POINTNORM_COMMANDS_HPP
#define POINTNORM_COMMANDS_HPP

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pointnorm/config.hpp"
#include "pointnorm/dataset.hpp"
#include "pointnorm/engine.hpp"
#include "pointnorm/eval.hpp"
#include "pointnorm/normalizers.hpp"
#include "pointnorm/synthgen.hpp"

namespace pointnorm {

/// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2 };

/// Standardized series with its split, ready for windowing.
struct PreparedData {
    SeriesFrame frame;
    SplitSpec split;
    StandardStats stats;
};

inline PreparedData prepare_data(const ExperimentConfig& c) {
    SeriesFrame raw = c.dataset.kind == DatasetKind::synth ? gen_piecewise(c.dataset.synth)
                                                           : load_csv(c.dataset.path, c.dataset.timestamp);
    raw = truncate_features(raw, c.dataset.max_features);
    PreparedData out;
    out.split = make_split(raw.length(), {c.split.train, c.split.val > 0 ? c.split.val : 1e-12, c.split.test});
    if (c.split.val <= 0) {
        // no validation rows: test starts right after train
        out.split.val = {out.split.train.end, out.split.train.end};
        out.split.test.begin = out.split.train.end;
    }
    out.stats = fit_standardizer(raw, out.split);
    out.frame = apply_standardizer(raw, out.stats);
    return out;
}

/// Perturb every parameter by N(0, scale^2) on top of its current value.
inline void randomize_params(Pipeline& pipe, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, scale);
    for (auto& p : pipe.params()) p += noise(rng);
}

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<unsigned> threads;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

inline std::filesystem::path fresh_run_dir(const std::filesystem::path& root, const std::string& hash) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    const std::string base = std::string(stamp) + "-" + hash.substr(0, 8);
    std::filesystem::path dir = root / base;
    for (int i = 1; std::filesystem::exists(dir); ++i) dir = root / (base + "-" + std::to_string(i));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string real(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Train and evaluate one seed on prepared data.
inline RunReport run_seed(const ExperimentConfig& c, const PreparedData& data, std::uint64_t seed, unsigned threads) {
    const auto started = std::chrono::steady_clock::now();
    const auto train_set = windows(data.frame, data.split.train, c.lookback, c.horizon, c.stride);
    const auto test_set = windows(data.frame, data.split.test, c.lookback, c.horizon, c.stride);
    const bool has_val = data.split.val.length() >= c.lookback + c.horizon;
    const auto val_set =
        has_val ? windows(data.frame, data.split.val, c.lookback, c.horizon, c.stride) : std::vector<InstancePair>{};

    Pipeline pipe(c.pipeline_spec(data.frame.features()));
    pipe.init(seed);

    RunReport r;
    r.config = c.echo;
    r.config_hash = detail::hex64(fnv1a(canonical_text(c)));
    r.seed = seed;
    r.horizon = c.horizon;
    if (has_val) {
        TrainConfig tc = c.train;
        tc.seed = seed;
        tc.threads = threads;
        r.history = train(pipe, train_set, val_set, tc);
        r.val = evaluate(pipe, val_set).metrics;
    } else {
        r.evaluation_only = true;
        r.notes.push_back("validation split too short for one window; parameters left at initialization");
    }
    const Evaluation test = evaluate(pipe, test_set);
    r.test = test.metrics;
    r.steps = test.steps;
    for (std::size_t k = 0; k < data.frame.features(); ++k) {
        const auto col = data.frame.values.slice_rows(data.split.train.begin, data.split.train.end).col(k);
        try {
            r.adf_train.push_back(adf_stat(col));
        } catch (const Error&) {
            r.adf_train.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    if (c.backbone.kind == BackboneKind::dlinear)
        r.notes.push_back("dlinear is a reduced decomposition-linear stand-in; compare metrics as a band, not exactly");
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return r;
}

/**
 * `run`: train and evaluate every seed, writing into a fresh timestamped run directory
 * under the output root, plus a LATEST file naming it.
 *
 * Files: report_seed<N>.json, metrics.csv (seed,horizon,mse,mae) and
 * diagnostics.csv (seed,step,mse,mae,mean_residual).
 */
inline int cmd_run(const std::string& config_path, const RunOptions& opts, std::ostream& log,
                   std::filesystem::path* run_dir_out = nullptr) {
    ExperimentConfig c;
    try {
        c = load_config(config_path);
        if (opts.threads && *opts.threads < 1) throw ConfigError("threads", "must be at least 1");
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    const std::vector<std::uint64_t> seeds = opts.seed ? std::vector<std::uint64_t>{*opts.seed} : c.seeds;
    const unsigned threads = opts.threads.value_or(c.train.threads);
    const std::filesystem::path root = opts.out_dir.value_or(c.out_dir);

    try {
        const PreparedData data = prepare_data(c);
        const std::string hash = detail::hex64(fnv1a(canonical_text(c)));
        const auto dir = detail::fresh_run_dir(root, hash);
        std::ofstream metrics_csv(dir / "metrics.csv");
        std::ofstream diag_csv(dir / "diagnostics.csv");
        metrics_csv << "seed,horizon,mse,mae\n";
        diag_csv << "seed,step,mse,mae,mean_residual\n";
        for (const auto seed : seeds) {
            const RunReport r = run_seed(c, data, seed, threads);
            write_report((dir / ("report_seed" + std::to_string(seed) + ".json")).string(), r);
            metrics_csv << seed << ',' << r.horizon << ',' << detail::real(r.test.mse) << ','
                        << detail::real(r.test.mae) << '\n';
            for (const auto& s : r.steps)
                diag_csv << seed << ',' << s.step << ',' << detail::real(s.mse) << ',' << detail::real(s.mae) << ','
                         << detail::real(s.mean_residual) << '\n';
            log << "seed " << seed << ": test mse " << r.test.mse << " mae " << r.test.mae << " (epochs "
                << r.history.train_loss.size() << ")\n";
        }
        if (!metrics_csv || !diag_csv) throw IOError("failed writing run outputs in " + dir.string());
        std::ofstream(root / "LATEST") << dir.filename().string() << '\n';
        if (run_dir_out) *run_dir_out = dir;
        log << "wrote " << dir.string() << '\n';
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    }
    return kExitOk;
}

/// `synth`: write the configured synthetic series as CSV.
inline int cmd_synth(const std::string& config_path, const std::optional<std::string>& out_path, std::ostream& log) {
    try {
        const ExperimentConfig c = load_config(config_path);
        const SeriesFrame frame = gen_piecewise(c.dataset.synth);
        const std::string path = out_path.value_or(c.synth_out);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IOError("cannot write " + path);
        write_csv(out, frame);
        log << "wrote " << frame.length() << "x" << frame.features() << " series to " << path << '\n';
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    }
    return kExitOk;
}

/// Finite-difference check of the configured pipeline on the first training windows.
inline GradCheckResult gradcheck_config(const ExperimentConfig& c, std::uint64_t seed,
                                        std::optional<std::size_t> corrupt_index = std::nullopt) {
    const PreparedData data = prepare_data(c);
    auto set = windows(data.frame, data.split.train, c.lookback, c.horizon, c.stride);
    if (set.size() > c.gradcheck.batch) set.resize(c.gradcheck.batch);
    Pipeline pipe(c.pipeline_spec(data.frame.features()));
    pipe.init(seed);
    randomize_params(pipe, seed + 1, c.gradcheck.param_scale);
    GradCheckOptions opts;
    opts.step = c.gradcheck.step;
    opts.max_checked = c.gradcheck.max_params;
    opts.seed = seed;
    opts.corrupt_index = corrupt_index;
    return grad_check(pipe, set, opts);
}

inline constexpr double kGradCheckTolerance = 1e-4;

/// `gradcheck`: exit 0 iff the maximum relative error is below 1e-4.
inline int cmd_gradcheck(const std::string& config_path, bool corrupt, std::ostream& log) {
    try {
        const ExperimentConfig c = load_config(config_path);
        const std::uint64_t seed = c.seeds.front();
        const auto result = gradcheck_config(c, seed, corrupt ? std::optional<std::size_t>(0) : std::nullopt);
        log << "checked " << result.checked << " coordinates; max relative error " << result.max_rel_error
            << " at " << result.worst_name << '\n';
        return result.max_rel_error < kGradCheckTolerance ? kExitOk : kExitCheckFailed;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    }
}

/// Trainable scalars actually allocated by a normalizer of the given method.
inline std::size_t allocated_normalizer_params(NormMethod method, std::size_t d, std::size_t l, std::size_t h) {
    NormalizerSpec spec;
    spec.method = method;
    Normalizer norm(spec, {l, h, d});
    ParamLayout layout;
    norm.allocate(layout);
    return layout.total();
}

/// `paramcount`: print the formula count; for revin/ld/lcd also verify the allocation.
inline int cmd_paramcount(const std::string& method, std::uint64_t d, std::uint64_t l, std::uint64_t h,
                          std::uint64_t slice, std::ostream& out, std::ostream& log) {
    std::uint64_t count = 0;
    try {
        count = param_count(method, d, l, h, slice);
    } catch (const UnknownMethod& e) {
        log << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    if (const auto m = parse_method(method)) {
        const auto allocated = allocated_normalizer_params(*m, d, l, h);
        if (allocated != count) {
            log << "allocation mismatch: formula " << count << ", allocated " << allocated << '\n';
            return kExitCheckFailed;
        }
    }
    out << count << '\n';
    return kExitOk;
}

}  // namespace pointnorm

#endif  // POINTNORM_COMMANDS_HPP
