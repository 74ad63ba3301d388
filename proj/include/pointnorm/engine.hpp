#ifndef POINTNORM_ENGINE_HPP
#define POINTNORM_ENGINE_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pointnorm/backbones.hpp"
#include "pointnorm/dataset.hpp"
#include "pointnorm/error.hpp"
#include "pointnorm/matrix.hpp"
#include "pointnorm/normalizers.hpp"
#include "pointnorm/params.hpp"

namespace pointnorm {

struct PipelineSpec {
    NormalizerSpec norm;
    BackboneSpec backbone;
    WindowShape shape;
};

/// Intermediates of one forward pass, consumed by the matching backward.
struct Trace {
    NormTrace norm;
    BackboneTrace backbone;
    Matrix y_hat;
};

/**
 * Normalizer wrapped around a backbone, with every trainable scalar in one flat
 * vector: normalizer block first, then the backbone.
 */
class Pipeline {
public:
    explicit Pipeline(PipelineSpec spec)
        : spec_(spec), normalizer_(spec.norm, spec.shape), backbone_(spec.backbone, spec.shape) {
        if (spec.shape.lookback < 2) throw ConfigError("L", "lookback must be at least 2");
        if (spec.shape.horizon < 1) throw ConfigError("H", "horizon must be at least 1");
        if (spec.shape.features < 1) throw ConfigError("D", "need at least one feature");
        normalizer_.allocate(layout_);
        normalizer_size_ = layout_.total();
        backbone_.allocate(layout_);
        params_.assign(layout_.total(), 0.0);
        normalizer_.init_neutral(params_);
    }

    const PipelineSpec& spec() const { return spec_; }
    const ParamLayout& layout() const { return layout_; }
    const Normalizer& normalizer() const { return normalizer_; }
    const Backbone& backbone() const { return backbone_; }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }
    std::size_t normalizer_param_count() const { return normalizer_size_; }

    /// Seeded backbone weights; normalizer parameters at their neutral values.
    void init(std::uint64_t seed) {
        std::fill(params_.begin(), params_.end(), 0.0);
        normalizer_.init_neutral(params_);
        std::mt19937_64 rng(seed);
        backbone_.init(params_, rng);
    }

    Matrix forward(const Matrix& x, Trace& tr) const {
        if (x.rows() != spec_.shape.lookback || x.cols() != spec_.shape.features)
            throw ShapeMismatch("pipeline input is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
        const Matrix x_tilde = normalizer_.normalize(x, params_, tr.norm);
        const Matrix y_tilde = backbone_.forward(x_tilde, params_, tr.backbone);
        tr.y_hat = normalizer_.denormalize(y_tilde, params_, tr.norm);
        if (!tr.y_hat.all_finite()) throw NonFiniteActivation("non-finite prediction");
        return tr.y_hat;
    }

    Matrix predict(const Matrix& x) const {
        Trace tr;
        return forward(x, tr);
    }

    /// Accumulates dL/dparams into `grad` given dL/dy_hat for the traced instance.
    void backward(const Trace& tr, const Matrix& d_y_hat, std::span<double> grad) const {
        const Matrix d_tilde = normalizer_.backward_denormalize(d_y_hat, params_, tr.norm, grad);
        const bool want_input = normalizer_.needs_input_grad();
        const Matrix d_in = backbone_.backward(d_tilde, params_, tr.backbone, grad, want_input);
        if (want_input) normalizer_.backward_normalize(d_in, params_, tr.norm, grad);
    }

private:
    PipelineSpec spec_;
    Normalizer normalizer_;
    Backbone backbone_;
    ParamLayout layout_;
    std::size_t normalizer_size_ = 0;
    std::vector<double> params_;
};

/// Mean of squared differences over all H x D entries.
inline double loss_mse(const Matrix& y_hat, const Matrix& y) {
    require_same_shape(y_hat, y, "loss_mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y_hat.flat()[i] - y.flat()[i];
        acc += r * r;
    }
    return acc / static_cast<double>(y.size());
}

namespace detail {

inline double accumulate_range(const Pipeline& pipe, std::span<const InstancePair* const> batch,
                               std::span<double> grad) {
    double loss = 0.0;
    Trace tr;
    for (const InstancePair* inst : batch) {
        const Matrix y_hat = pipe.forward(inst->x, tr);
        loss += loss_mse(y_hat, inst->y);
        if (grad.empty()) continue;
        Matrix d(y_hat.rows(), y_hat.cols());
        const double scale = 2.0 / static_cast<double>(y_hat.size());
        for (std::size_t i = 0; i < d.size(); ++i) d.flat()[i] = scale * (y_hat.flat()[i] - inst->y.flat()[i]);
        pipe.backward(tr, d, grad);
    }
    return loss;
}

}  // namespace detail

/**
 * Batch-mean loss and its exact gradient (pass an empty span to skip the gradient).
 *
 * With threads > 1 the batch is cut into contiguous chunks whose partial sums are
 * added in chunk order, so results are repeatable for a fixed thread count but not
 * bit-identical to the single-threaded order.
 */
inline double batch_loss(const Pipeline& pipe, std::span<const InstancePair* const> batch, std::span<double> grad,
                         unsigned threads = 1) {
    if (batch.empty()) throw EmptySet("empty batch");
    const auto n = static_cast<double>(batch.size());
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    const std::size_t chunks = std::min<std::size_t>(std::max(1u, threads), batch.size());
    double loss = 0.0;
    if (chunks == 1) {
        loss = detail::accumulate_range(pipe, batch, grad);
    } else {
        std::vector<double> partial_loss(chunks, 0.0);
        std::vector<std::vector<double>> partial_grad(chunks, std::vector<double>(grad.empty() ? 0 : grad.size()));
        std::vector<std::exception_ptr> errors(chunks);
        {
            std::vector<std::jthread> workers;
            for (std::size_t c = 0; c < chunks; ++c) {
                const std::size_t lo = batch.size() * c / chunks;
                const std::size_t hi = batch.size() * (c + 1) / chunks;
                workers.emplace_back([&, c, lo, hi] {
                    try {
                        partial_loss[c] = detail::accumulate_range(pipe, batch.subspan(lo, hi - lo), partial_grad[c]);
                    } catch (...) {
                        errors[c] = std::current_exception();
                    }
                });
            }
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (std::size_t c = 0; c < chunks; ++c) {
            loss += partial_loss[c];
            for (std::size_t i = 0; i < partial_grad[c].size(); ++i) grad[i] += partial_grad[c][i];
        }
    }
    if (!grad.empty())
        for (auto& g : grad) g /= n;
    return loss / n;
}

inline std::vector<const InstancePair*> pointers(const std::vector<InstancePair>& set) {
    std::vector<const InstancePair*> out;
    out.reserve(set.size());
    for (const auto& p : set) out.push_back(&p);
    return out;
}

/// Flat gradient of the batch-mean loss.
inline std::vector<double> backward(const Pipeline& pipe, const std::vector<InstancePair>& batch) {
    std::vector<double> grad(pipe.param_count(), 0.0);
    const auto ptrs = pointers(batch);
    batch_loss(pipe, ptrs, grad);
    return grad;
}

struct GradCheckOptions {
    double step = 1e-5;
    std::size_t max_checked = 10000;  // above this, a seeded random subset is checked
    std::uint64_t seed = 0;
    std::optional<std::size_t> corrupt_index;  // planted fault: analytic entry doubled
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::string worst_name;
    std::size_t checked = 0;
};

/**
 * Compare the analytic gradient with central finite differences.
 *
 * Error per coordinate is |g_analytic - g_fd| / max(1, |g_analytic|, |g_fd|).
 */
inline GradCheckResult grad_check(Pipeline& pipe, const std::vector<InstancePair>& batch,
                                  const GradCheckOptions& opts = {}) {
    if (!(opts.step >= 1e-7 && opts.step <= 1e-3)) throw ConfigError("step", "must lie in [1e-7, 1e-3]");
    std::vector<double> grad = backward(pipe, batch);
    if (opts.corrupt_index && *opts.corrupt_index < grad.size()) {
        double& g = grad[*opts.corrupt_index];
        g = g == 0.0 ? 1.0 : 2.0 * g;
    }

    std::vector<std::size_t> coords(pipe.param_count());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opts.max_checked) {
        std::mt19937_64 rng(opts.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(opts.max_checked);
        if (opts.corrupt_index && *opts.corrupt_index < pipe.param_count() &&
            std::find(coords.begin(), coords.end(), *opts.corrupt_index) == coords.end())
            coords.back() = *opts.corrupt_index;
        std::sort(coords.begin(), coords.end());
    }

    const auto ptrs = pointers(batch);
    auto params = pipe.params();
    GradCheckResult result;
    for (std::size_t i : coords) {
        const double saved = params[i];
        params[i] = saved + opts.step;
        const double up = batch_loss(pipe, ptrs, {});
        params[i] = saved - opts.step;
        const double down = batch_loss(pipe, ptrs, {});
        params[i] = saved;
        const double fd = (up - down) / (2.0 * opts.step);
        const double err = std::abs(grad[i] - fd) / std::max({1.0, std::abs(grad[i]), std::abs(fd)});
        if (err > result.max_rel_error || result.checked == 0) {
            result.max_rel_error = err;
            result.worst_index = i;
        }
        ++result.checked;
    }
    result.worst_name = pipe.layout().describe(result.worst_index);
    return result;
}

struct TrainConfig {
    double lr = 1e-4;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 20;
    std::size_t patience = 3;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    unsigned threads = 1;
    bool freeze_normalizer = false;
};

inline void validate(const TrainConfig& c) {
    if (!(c.lr > 0.0)) throw ConfigError("train.lr", "must be positive");
    if (c.batch_size < 1) throw ConfigError("train.batch_size", "must be at least 1");
    if (c.max_epochs < 1) throw ConfigError("train.max_epochs", "must be at least 1");
    if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1", "must lie in [0, 1)");
    if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2", "must lie in [0, 1)");
    if (!(c.adam_eps > 0.0)) throw ConfigError("train.adam_eps", "must be positive");
    if (c.threads < 1) throw ConfigError("threads", "must be at least 1");
}

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of params[begin, end); advances the step counter.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st,
                      const TrainConfig& cfg, std::size_t begin = 0) {
    if (params.size() != grads.size() || st.m.size() != params.size())
        throw ShapeMismatch("adam_step: parameter, gradient and moment sizes differ");
    ++st.t;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.t));
    for (std::size_t i = begin; i < params.size(); ++i) {
        const double g = grads[i];
        st.m[i] = cfg.adam_beta1 * st.m[i] + (1.0 - cfg.adam_beta1) * g;
        st.v[i] = cfg.adam_beta2 * st.v[i] + (1.0 - cfg.adam_beta2) * g * g;
        params[i] -= cfg.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.adam_eps);
    }
}

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;  // 1-based
    double best_val = std::numeric_limits<double>::infinity();
    double wall_seconds = 0.0;
};

inline double mean_loss(const Pipeline& pipe, const std::vector<InstancePair>& set, unsigned threads = 1) {
    const auto ptrs = pointers(set);
    return batch_loss(pipe, ptrs, {}, threads);
}

/**
 * Mini-batch Adam with early stopping on validation MSE.
 *
 * Windows are reshuffled every epoch from one seeded generator. After each epoch the
 * validation loss is recorded; training stops once `patience` epochs have passed
 * without a new best (so patience 0 runs one epoch), and the best epoch's parameters
 * are restored.
 */
inline TrainHistory train(Pipeline& pipe, const std::vector<InstancePair>& train_set,
                          const std::vector<InstancePair>& val_set, const TrainConfig& cfg) {
    validate(cfg);
    if (train_set.empty()) throw EmptySet("empty train set");
    if (val_set.empty()) throw EmptySet("empty validation set");
    const auto started = std::chrono::steady_clock::now();

    TrainHistory hist;
    auto params = pipe.params();
    std::vector<double> best(params.begin(), params.end());
    std::vector<double> grad(params.size(), 0.0);
    AdamState adam(params.size());
    const std::size_t first_trainable = cfg.freeze_normalizer ? pipe.normalizer_param_count() : 0;

    auto order = pointers(train_set);
    std::mt19937_64 rng(cfg.seed);
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            const std::span<const InstancePair* const> batch(order.data() + lo, hi - lo);
            double loss = 0.0;
            try {
                loss = batch_loss(pipe, batch, grad, cfg.threads);
            } catch (const NonFiniteActivation&) {
                throw NonFiniteActivation("non-finite activation at epoch " + std::to_string(epoch) + ", batch " +
                                          std::to_string(batches));
            }
            adam_step(params, grad, adam, cfg, first_trainable);
            epoch_loss += loss;
            ++batches;
        }
        hist.train_loss.push_back(epoch_loss / static_cast<double>(batches));
        const double val = mean_loss(pipe, val_set, cfg.threads);
        hist.val_loss.push_back(val);
        if (val < hist.best_val) {
            hist.best_val = val;
            hist.best_epoch = epoch;
            std::copy(params.begin(), params.end(), best.begin());
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= cfg.patience) break;
    }
    std::copy(best.begin(), best.end(), params.begin());
    hist.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return hist;
}

}  // namespace pointnorm

#endif  // POINTNORM_ENGINE_HPP
