#ifndef POINTNORM_EVAL_HPP
#define POINTNORM_EVAL_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pointnorm/dataset.hpp"
#include "pointnorm/engine.hpp"
#include "pointnorm/error.hpp"
#include "pointnorm/matrix.hpp"

namespace pointnorm {

struct MetricPair {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t n_instances = 0;
    bool operator==(const MetricPair&) const = default;
};

/// MSE and MAE averaged over instances x H x D.
inline MetricPair metrics(std::span<const Matrix> y_hat, std::span<const Matrix> y) {
    if (y_hat.empty()) throw EmptySet("metrics: no instances");
    if (y_hat.size() != y.size()) throw ShapeMismatch("metrics: prediction and target counts differ");
    double sq = 0.0;
    double ab = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        require_same_shape(y_hat[i], y[i], "metrics");
        for (std::size_t j = 0; j < y[i].size(); ++j) {
            const double r = y_hat[i].flat()[j] - y[i].flat()[j];
            sq += r * r;
            ab += std::abs(r);
        }
        count += y[i].size();
    }
    return {sq / static_cast<double>(count), ab / static_cast<double>(count), y.size()};
}

struct Improvement {
    double mse_pct = 0.0;
    double mae_pct = 0.0;
};

/// Mean over horizons of (base - new) / base, in percent, per metric.
inline Improvement improvement(std::span<const MetricPair> base, std::span<const MetricPair> fresh) {
    if (base.size() != fresh.size() || base.empty())
        throw ShapeMismatch("improvement: need equal, non-empty horizon lists");
    Improvement out;
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (base[i].mse == 0.0 || base[i].mae == 0.0) throw DivisionByZero("improvement: zero base metric");
        out.mse_pct += (base[i].mse - fresh[i].mse) / base[i].mse;
        out.mae_pct += (base[i].mae - fresh[i].mae) / base[i].mae;
    }
    out.mse_pct *= 100.0 / static_cast<double>(base.size());
    out.mae_pct *= 100.0 / static_cast<double>(base.size());
    return out;
}

/// Schwert's rule floor(12 (n/100)^(1/4)).
inline std::size_t default_adf_lag(std::size_t n) {
    return static_cast<std::size_t>(std::floor(12.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
}

/**
 * Augmented Dickey-Fuller t-statistic with a constant and `max_lag` lagged differences.
 *
 * Regresses dy_t on [1, y_{t-1}, dy_{t-1}, ..., dy_{t-p}] for t = p+1 .. n-1 and returns
 * coef(y_{t-1}) / se. The constant is absorbed by demeaning every column, which leaves the
 * slope estimates and their standard errors unchanged; the remaining normal equations are
 * solved by Cholesky.
 */
inline double adf_stat(std::span<const double> series, std::size_t max_lag) {
    const std::size_t n = series.size();
    const std::size_t k = max_lag + 1;  // slopes: y_{t-1} and p lagged differences
    if (n < max_lag + 3 || n - 1 - max_lag <= k + 1)
        throw TooShort("adf_stat: series of " + std::to_string(n) + " too short for lag " + std::to_string(max_lag));
    std::vector<double> diff(n - 1);
    for (std::size_t t = 1; t < n; ++t) diff[t - 1] = series[t] - series[t - 1];

    // sample rows: diff index i = max_lag .. n-2
    const std::size_t nobs = n - 1 - max_lag;
    auto regressor = [&](std::size_t i, std::size_t a) { return a == 0 ? series[i] : diff[i - a]; };
    std::vector<double> mean(k, 0.0);
    double mean_y = 0.0;
    for (std::size_t i = max_lag; i < n - 1; ++i) {
        mean_y += diff[i];
        for (std::size_t a = 0; a < k; ++a) mean[a] += regressor(i, a);
    }
    mean_y /= static_cast<double>(nobs);
    for (auto& m : mean) m /= static_cast<double>(nobs);

    std::vector<double> xtx(k * k, 0.0);
    std::vector<double> xty(k, 0.0);
    std::vector<double> row(k);
    auto fill_row = [&](std::size_t i) {
        for (std::size_t a = 0; a < k; ++a) row[a] = regressor(i, a) - mean[a];
    };
    for (std::size_t i = max_lag; i < n - 1; ++i) {
        fill_row(i);
        const double y = diff[i] - mean_y;
        for (std::size_t a = 0; a < k; ++a) {
            xty[a] += row[a] * y;
            for (std::size_t b = 0; b <= a; ++b) xtx[a * k + b] += row[a] * row[b];
        }
    }
    // Cholesky xtx = G G^T in the lower triangle
    std::vector<double> g(k * k, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
            double s = xtx[a * k + b];
            for (std::size_t c = 0; c < b; ++c) s -= g[a * k + c] * g[b * k + c];
            if (a == b) {
                if (!(s > 1e-12 * xtx[a * k + a])) throw SingularRegression("adf_stat: singular design");
                g[a * k + a] = std::sqrt(s);
            } else {
                g[a * k + b] = s / g[b * k + b];
            }
        }
    }
    auto solve = [&](std::vector<double> rhs) {
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t c = 0; c < a; ++c) rhs[a] -= g[a * k + c] * rhs[c];
            rhs[a] /= g[a * k + a];
        }
        for (std::size_t a = k; a-- > 0;) {
            for (std::size_t c = a + 1; c < k; ++c) rhs[a] -= g[c * k + a] * rhs[c];
            rhs[a] /= g[a * k + a];
        }
        return rhs;
    };
    const std::vector<double> beta = solve(xty);
    double rss = 0.0;
    for (std::size_t i = max_lag; i < n - 1; ++i) {
        fill_row(i);
        double fit = 0.0;
        for (std::size_t a = 0; a < k; ++a) fit += row[a] * beta[a];
        const double r = diff[i] - mean_y - fit;
        rss += r * r;
    }
    std::vector<double> unit(k, 0.0);
    unit[0] = 1.0;
    const double inv00 = solve(unit)[0];
    const double sigma2 = rss / static_cast<double>(nobs - k - 1);
    const double se = std::sqrt(sigma2 * inv00);
    if (!(se > 0.0)) throw SingularRegression("adf_stat: zero residual variance");
    return beta[0] / se;
}

inline double adf_stat(std::span<const double> series) { return adf_stat(series, default_adf_lag(series.size())); }

/// Error statistics of one forecast step, pooled over instances and features.
struct StepStats {
    std::size_t step = 0;
    double mse = 0.0;
    double mae = 0.0;
    double mean_residual = 0.0;
};

inline std::vector<StepStats> step_stats(std::span<const Matrix> y_hat, std::span<const Matrix> y) {
    if (y.empty()) throw EmptySet("step_stats: no instances");
    const std::size_t h = y[0].rows();
    const std::size_t d = y[0].cols();
    std::vector<StepStats> out(h);
    for (std::size_t n = 0; n < h; ++n) {
        out[n].step = n + 1;
        for (std::size_t i = 0; i < y.size(); ++i)
            for (std::size_t k = 0; k < d; ++k) {
                const double r = y_hat[i](n, k) - y[i](n, k);
                out[n].mse += r * r;
                out[n].mae += std::abs(r);
                out[n].mean_residual += r;
            }
        const auto count = static_cast<double>(y.size() * d);
        out[n].mse /= count;
        out[n].mae /= count;
        out[n].mean_residual /= count;
    }
    return out;
}

struct Evaluation {
    MetricPair metrics;
    std::vector<StepStats> steps;
};

inline Evaluation evaluate(const Pipeline& pipe, const std::vector<InstancePair>& set) {
    if (set.empty()) throw EmptySet("evaluate: empty set");
    std::vector<Matrix> preds;
    std::vector<Matrix> targets;
    preds.reserve(set.size());
    targets.reserve(set.size());
    for (const auto& inst : set) {
        preds.push_back(pipe.predict(inst.x));
        targets.push_back(inst.y);
    }
    return {metrics(preds, targets), step_stats(preds, targets)};
}

/// 64-bit FNV-1a, used to fingerprint canonical config text.
inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/**
 * Serializable record of one seeded run. Field order in the JSON is fixed; only
 * `wall_seconds` and `history.wall_seconds` vary between identical runs.
 */
struct RunReport {
    std::map<std::string, std::string> config;
    std::string config_hash;
    std::uint64_t seed = 0;
    bool evaluation_only = false;
    std::size_t horizon = 0;
    MetricPair test;
    std::optional<MetricPair> val;
    TrainHistory history;
    std::vector<double> adf_train;  // per feature, standardized train split
    std::vector<StepStats> steps;
    std::vector<std::string> notes;
    double wall_seconds = 0.0;

    bool operator==(const RunReport& o) const {
        auto same_hist = [](const TrainHistory& a, const TrainHistory& b) {
            return a.train_loss == b.train_loss && a.val_loss == b.val_loss && a.best_epoch == b.best_epoch &&
                   (a.best_val == b.best_val || (std::isinf(a.best_val) && std::isinf(b.best_val)));
        };
        auto same_steps = [](const std::vector<StepStats>& a, const std::vector<StepStats>& b) {
            if (a.size() != b.size()) return false;
            for (std::size_t i = 0; i < a.size(); ++i)
                if (a[i].step != b[i].step || a[i].mse != b[i].mse || a[i].mae != b[i].mae ||
                    a[i].mean_residual != b[i].mean_residual)
                    return false;
            return true;
        };
        return config == o.config && config_hash == o.config_hash && seed == o.seed &&
               evaluation_only == o.evaluation_only && horizon == o.horizon && test == o.test && val == o.val &&
               same_hist(history, o.history) && adf_train == o.adf_train && same_steps(steps, o.steps) &&
               notes == o.notes;
    }
};

inline nlohmann::ordered_json metric_json(const MetricPair& m) {
    return {{"mse", m.mse}, {"mae", m.mae}, {"n_instances", m.n_instances}};
}

inline MetricPair metric_from_json(const nlohmann::ordered_json& j) {
    return {j.at("mse").get<double>(), j.at("mae").get<double>(), j.at("n_instances").get<std::size_t>()};
}

inline nlohmann::ordered_json to_json(const RunReport& r) {
    nlohmann::ordered_json j;
    j["format"] = "pointnorm.run_report/1";
    j["config_hash"] = r.config_hash;
    j["seed"] = r.seed;
    j["mode"] = r.evaluation_only ? "evaluation_only" : "train_eval";
    j["horizon"] = r.horizon;
    j["test"] = metric_json(r.test);
    j["val"] = r.val ? metric_json(*r.val) : nlohmann::ordered_json(nullptr);
    nlohmann::ordered_json h;
    h["epochs"] = r.history.train_loss.size();
    h["best_epoch"] = r.history.best_epoch;
    h["best_val"] = std::isinf(r.history.best_val) ? nlohmann::ordered_json(nullptr)
                                                   : nlohmann::ordered_json(r.history.best_val);
    h["train_loss"] = r.history.train_loss;
    h["val_loss"] = r.history.val_loss;
    h["wall_seconds"] = r.history.wall_seconds;
    j["history"] = h;
    j["adf_train"] = r.adf_train;
    auto steps = nlohmann::ordered_json::array();
    for (const auto& s : r.steps)
        steps.push_back({{"step", s.step}, {"mse", s.mse}, {"mae", s.mae}, {"mean_residual", s.mean_residual}});
    j["steps"] = steps;
    j["notes"] = r.notes;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.config) cfg[k] = v;
    j["config"] = cfg;
    j["wall_seconds"] = r.wall_seconds;
    return j;
}

inline RunReport report_from_json(const nlohmann::ordered_json& j) {
    RunReport r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.evaluation_only = j.at("mode").get<std::string>() == "evaluation_only";
    r.horizon = j.at("horizon").get<std::size_t>();
    r.test = metric_from_json(j.at("test"));
    if (!j.at("val").is_null()) r.val = metric_from_json(j.at("val"));
    const auto& h = j.at("history");
    r.history.best_epoch = h.at("best_epoch").get<std::size_t>();
    r.history.best_val =
        h.at("best_val").is_null() ? std::numeric_limits<double>::infinity() : h.at("best_val").get<double>();
    r.history.train_loss = h.at("train_loss").get<std::vector<double>>();
    r.history.val_loss = h.at("val_loss").get<std::vector<double>>();
    r.history.wall_seconds = h.at("wall_seconds").get<double>();
    r.adf_train = j.at("adf_train").get<std::vector<double>>();
    for (const auto& s : j.at("steps"))
        r.steps.push_back({s.at("step").get<std::size_t>(), s.at("mse").get<double>(), s.at("mae").get<double>(),
                           s.at("mean_residual").get<double>()});
    r.notes = j.at("notes").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("config").items()) r.config[k] = v.get<std::string>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    return r;
}

inline void write_report(const std::string& path, const RunReport& r) {
    std::ofstream out(path);
    if (!out) throw IOError("cannot write " + path);
    out << to_json(r).dump(2) << '\n';
    if (!out) throw IOError("write failed for " + path);
}

inline RunReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOError("cannot open " + path);
    return report_from_json(nlohmann::ordered_json::parse(in));
}

}  // namespace pointnorm

#endif  // POINTNORM_EVAL_HPP
