#ifndef POINTNORM_BACKBONES_HPP
#define POINTNORM_BACKBONES_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pointnorm/error.hpp"
#include "pointnorm/matrix.hpp"
#include "pointnorm/normalizers.hpp"
#include "pointnorm/params.hpp"

namespace pointnorm {

enum class BackboneKind { identity, linear, dlinear, mlp };

inline const char* backbone_name(BackboneKind k) {
    switch (k) {
        case BackboneKind::identity: return "identity";
        case BackboneKind::linear: return "linear";
        case BackboneKind::dlinear: return "dlinear";
        case BackboneKind::mlp: return "mlp";
    }
    return "?";
}

inline std::optional<BackboneKind> parse_backbone(const std::string& name) {
    for (auto k : {BackboneKind::identity, BackboneKind::linear, BackboneKind::dlinear, BackboneKind::mlp})
        if (name == backbone_name(k)) return k;
    return std::nullopt;
}

struct BackboneSpec {
    BackboneKind kind = BackboneKind::linear;
    bool individual = true;  // per-feature heads; false shares one head across features
    std::size_t kernel = 25;
    std::size_t hidden = 64;
};

/// Edge-replicated moving average of length-L `x`: front pad (m-1)/2, back pad m-1-(m-1)/2.
inline std::vector<double> moving_average(std::span<const double> x, std::size_t kernel) {
    const auto steps = static_cast<long>(x.size());
    const auto front = static_cast<long>((kernel - 1) / 2);
    std::vector<double> out(x.size(), 0.0);
    for (long t = 0; t < steps; ++t) {
        double acc = 0.0;
        for (long j = 0; j < static_cast<long>(kernel); ++j)
            acc += x[static_cast<std::size_t>(std::clamp(t - front + j, 0L, steps - 1))];
        out[static_cast<std::size_t>(t)] = acc / static_cast<double>(kernel);
    }
    return out;
}

/// Adjoint of moving_average: accumulates d(trend) into d(x).
inline void moving_average_adjoint(std::span<const double> d_trend, std::size_t kernel, std::span<double> d_x) {
    const auto steps = static_cast<long>(d_trend.size());
    const auto front = static_cast<long>((kernel - 1) / 2);
    const double w = 1.0 / static_cast<double>(kernel);
    for (long t = 0; t < steps; ++t)
        for (long j = 0; j < static_cast<long>(kernel); ++j)
            d_x[static_cast<std::size_t>(std::clamp(t - front + j, 0L, steps - 1))] +=
                w * d_trend[static_cast<std::size_t>(t)];
}

struct BackboneTrace {
    Matrix input;
    std::vector<std::vector<double>> trend;     // dlinear, per feature
    std::vector<std::vector<double>> pre;       // mlp hidden pre-activations, per feature
};

/**
 * Forecasting core g mapping an L x D window to H x D.
 *
 * Shape map of the flat weights (S = D per-feature heads or 1 shared):
 *   linear:  W S x H x L, b S x H
 *   dlinear: trend W, trend b, remainder W, remainder b (each as linear)
 *   mlp:     W1 S x hidden x L, b1 S x hidden, W2 S x H x hidden, b2 S x H
 *   identity: no weights; y[n,k] = x[min(n, L-1), k]
 */
class Backbone {
public:
    Backbone() = default;
    Backbone(BackboneSpec spec, WindowShape shape) : spec_(spec), shape_(shape) {
        if (spec_.kind == BackboneKind::dlinear && spec_.kernel < 1)
            throw ConfigError("backbone.kernel", "must be at least 1");
        if (spec_.kind == BackboneKind::mlp && spec_.hidden < 1)
            throw ConfigError("backbone.hidden", "must be at least 1");
    }

    const BackboneSpec& spec() const { return spec_; }

    void allocate(ParamLayout& layout) {
        const std::size_t s = heads();
        const std::size_t l = shape_.lookback;
        const std::size_t h = shape_.horizon;
        switch (spec_.kind) {
            case BackboneKind::identity:
                break;
            case BackboneKind::linear:
                w1_ = layout.add("linear.W", s * h * l);
                b1_ = layout.add("linear.b", s * h);
                break;
            case BackboneKind::dlinear:
                w1_ = layout.add("dlinear.trend.W", s * h * l);
                b1_ = layout.add("dlinear.trend.b", s * h);
                w2_ = layout.add("dlinear.remainder.W", s * h * l);
                b2_ = layout.add("dlinear.remainder.b", s * h);
                break;
            case BackboneKind::mlp:
                w1_ = layout.add("mlp.W1", s * spec_.hidden * l);
                b1_ = layout.add("mlp.b1", s * spec_.hidden);
                w2_ = layout.add("mlp.W2", s * h * spec_.hidden);
                b2_ = layout.add("mlp.b2", s * h);
                break;
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    template <class Rng>
    void init(std::span<double> params, Rng& rng) const {
        const std::size_t s = heads();
        const std::size_t l = shape_.lookback;
        const std::size_t h = shape_.horizon;
        auto fill = [&](std::size_t offset, std::size_t n, std::size_t fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (std::size_t i = 0; i < n; ++i) params[offset + i] = dist(rng);
        };
        switch (spec_.kind) {
            case BackboneKind::identity:
                break;
            case BackboneKind::linear:
                fill(w1_, s * h * l, l);
                fill(b1_, s * h, l);
                break;
            case BackboneKind::dlinear:
                fill(w1_, s * h * l, l);
                fill(b1_, s * h, l);
                fill(w2_, s * h * l, l);
                fill(b2_, s * h, l);
                break;
            case BackboneKind::mlp:
                fill(w1_, s * spec_.hidden * l, l);
                fill(b1_, s * spec_.hidden, l);
                fill(w2_, s * h * spec_.hidden, spec_.hidden);
                fill(b2_, s * h, spec_.hidden);
                break;
        }
    }

    Matrix forward(const Matrix& x, std::span<const double> params, BackboneTrace& tr) const {
        if (x.rows() != shape_.lookback || x.cols() != shape_.features)
            throw ShapeMismatch("backbone input is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                                ", expected " + std::to_string(shape_.lookback) + "x" +
                                std::to_string(shape_.features));
        const std::size_t l = shape_.lookback;
        const std::size_t h = shape_.horizon;
        const std::size_t d = shape_.features;
        Matrix y(h, d);
        tr.input = x;
        switch (spec_.kind) {
            case BackboneKind::identity:
                for (std::size_t n = 0; n < h; ++n)
                    for (std::size_t k = 0; k < d; ++k) y(n, k) = x(std::min(n, l - 1), k);
                break;
            case BackboneKind::linear:
                for (std::size_t k = 0; k < d; ++k) {
                    const auto col = x.col(k);
                    head(params, w1_, b1_, k, col, y, k, false);
                }
                break;
            case BackboneKind::dlinear:
                tr.trend.assign(d, {});
                for (std::size_t k = 0; k < d; ++k) {
                    const auto col = x.col(k);
                    tr.trend[k] = moving_average(col, spec_.kernel);
                    std::vector<double> rem(l);
                    for (std::size_t t = 0; t < l; ++t) rem[t] = col[t] - tr.trend[k][t];
                    head(params, w1_, b1_, k, tr.trend[k], y, k, false);
                    head(params, w2_, b2_, k, rem, y, k, true);
                }
                break;
            case BackboneKind::mlp: {
                const std::size_t hid = spec_.hidden;
                tr.pre.assign(d, std::vector<double>(hid));
                for (std::size_t k = 0; k < d; ++k) {
                    const auto col = x.col(k);
                    const std::size_t s = spec_.individual ? k : 0;
                    const double* w1 = params.data() + w1_ + s * hid * l;
                    const double* b1 = params.data() + b1_ + s * hid;
                    const double* w2 = params.data() + w2_ + s * h * hid;
                    const double* b2 = params.data() + b2_ + s * h;
                    auto& pre = tr.pre[k];
                    for (std::size_t j = 0; j < hid; ++j) {
                        double acc = b1[j];
                        for (std::size_t t = 0; t < l; ++t) acc += w1[j * l + t] * col[t];
                        pre[j] = acc;
                    }
                    for (std::size_t n = 0; n < h; ++n) {
                        double acc = b2[n];
                        for (std::size_t j = 0; j < hid; ++j) acc += w2[n * hid + j] * std::max(pre[j], 0.0);
                        y(n, k) = acc;
                    }
                }
                break;
            }
        }
        return y;
    }

    /// Accumulates weight gradients; returns dL/dx when `want_input` (else an empty matrix).
    Matrix backward(const Matrix& d_y, std::span<const double> params, const BackboneTrace& tr,
                    std::span<double> grad, bool want_input) const {
        const std::size_t l = shape_.lookback;
        const std::size_t h = shape_.horizon;
        const std::size_t d = shape_.features;
        Matrix d_x = want_input ? Matrix(l, d) : Matrix();
        std::vector<double> d_col(l);
        switch (spec_.kind) {
            case BackboneKind::identity:
                if (want_input)
                    for (std::size_t n = 0; n < h; ++n)
                        for (std::size_t k = 0; k < d; ++k) d_x(std::min(n, l - 1), k) += d_y(n, k);
                break;
            case BackboneKind::linear:
                for (std::size_t k = 0; k < d; ++k) {
                    const auto col = tr.input.col(k);
                    std::fill(d_col.begin(), d_col.end(), 0.0);
                    head_backward(params, w1_, b1_, k, col, d_y, grad, want_input ? &d_col : nullptr);
                    if (want_input)
                        for (std::size_t t = 0; t < l; ++t) d_x(t, k) = d_col[t];
                }
                break;
            case BackboneKind::dlinear: {
                std::vector<double> d_trend(l), d_rem(l), rem(l);
                for (std::size_t k = 0; k < d; ++k) {
                    const auto col = tr.input.col(k);
                    for (std::size_t t = 0; t < l; ++t) rem[t] = col[t] - tr.trend[k][t];
                    std::fill(d_trend.begin(), d_trend.end(), 0.0);
                    std::fill(d_rem.begin(), d_rem.end(), 0.0);
                    head_backward(params, w1_, b1_, k, tr.trend[k], d_y, grad, want_input ? &d_trend : nullptr);
                    head_backward(params, w2_, b2_, k, rem, d_y, grad, want_input ? &d_rem : nullptr);
                    if (want_input) {
                        // x -> (trend, x - trend): dx = d_rem + M^T (d_trend - d_rem)
                        for (std::size_t t = 0; t < l; ++t) {
                            d_col[t] = d_rem[t];
                            d_trend[t] -= d_rem[t];
                        }
                        moving_average_adjoint(d_trend, spec_.kernel, d_col);
                        for (std::size_t t = 0; t < l; ++t) d_x(t, k) = d_col[t];
                    }
                }
                break;
            }
            case BackboneKind::mlp: {
                const std::size_t hid = spec_.hidden;
                std::vector<double> d_pre(hid);
                for (std::size_t k = 0; k < d; ++k) {
                    const auto col = tr.input.col(k);
                    const std::size_t s = spec_.individual ? k : 0;
                    const double* w1 = params.data() + w1_ + s * hid * l;
                    const double* w2 = params.data() + w2_ + s * h * hid;
                    const auto& pre = tr.pre[k];
                    std::fill(d_pre.begin(), d_pre.end(), 0.0);
                    for (std::size_t n = 0; n < h; ++n) {
                        const double g = d_y(n, k);
                        grad[b2_ + s * h + n] += g;
                        double* gw2 = grad.data() + w2_ + s * h * hid + n * hid;
                        for (std::size_t j = 0; j < hid; ++j) {
                            gw2[j] += g * std::max(pre[j], 0.0);
                            d_pre[j] += g * w2[n * hid + j];
                        }
                    }
                    for (std::size_t j = 0; j < hid; ++j) {
                        if (pre[j] <= 0.0) continue;
                        const double g = d_pre[j];
                        grad[b1_ + s * hid + j] += g;
                        double* gw1 = grad.data() + w1_ + s * hid * l + j * l;
                        for (std::size_t t = 0; t < l; ++t) gw1[t] += g * col[t];
                        if (want_input)
                            for (std::size_t t = 0; t < l; ++t) d_x(t, k) += g * w1[j * l + t];
                    }
                }
                break;
            }
        }
        return d_x;
    }

private:
    std::size_t heads() const { return spec_.individual ? shape_.features : 1; }

    // y[:,k] (+)= W_s in + b_s
    void head(std::span<const double> params, std::size_t w_off, std::size_t b_off, std::size_t k,
              std::span<const double> in, Matrix& y, std::size_t col, bool accumulate) const {
        const std::size_t l = shape_.lookback;
        const std::size_t h = shape_.horizon;
        const std::size_t s = spec_.individual ? k : 0;
        const double* w = params.data() + w_off + s * h * l;
        const double* b = params.data() + b_off + s * h;
        for (std::size_t n = 0; n < h; ++n) {
            double acc = b[n];
            const double* wn = w + n * l;
            for (std::size_t t = 0; t < l; ++t) acc += wn[t] * in[t];
            y(n, col) = accumulate ? y(n, col) + acc : acc;
        }
    }

    void head_backward(std::span<const double> params, std::size_t w_off, std::size_t b_off, std::size_t k,
                       std::span<const double> in, const Matrix& d_y, std::span<double> grad,
                       std::vector<double>* d_in) const {
        const std::size_t l = shape_.lookback;
        const std::size_t h = shape_.horizon;
        const std::size_t s = spec_.individual ? k : 0;
        const double* w = params.data() + w_off + s * h * l;
        double* gw = grad.data() + w_off + s * h * l;
        double* gb = grad.data() + b_off + s * h;
        for (std::size_t n = 0; n < h; ++n) {
            const double g = d_y(n, k);
            gb[n] += g;
            double* gwn = gw + n * l;
            for (std::size_t t = 0; t < l; ++t) gwn[t] += g * in[t];
            if (d_in) {
                const double* wn = w + n * l;
                for (std::size_t t = 0; t < l; ++t) (*d_in)[t] += g * wn[t];
            }
        }
    }

    BackboneSpec spec_;
    WindowShape shape_;
    std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
};

}  // namespace pointnorm

#endif  // POINTNORM_BACKBONES_HPP
