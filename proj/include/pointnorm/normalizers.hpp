#ifndef POINTNORM_NORMALIZERS_HPP
#define POINTNORM_NORMALIZERS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pointnorm/error.hpp"
#include "pointnorm/matrix.hpp"
#include "pointnorm/params.hpp"

namespace pointnorm {

// ---------------------------------------------------------------------------
// Instance statistics (z-score pair)
// ---------------------------------------------------------------------------

/// Per-instance lookback statistics needed to undo the z-score.
struct NormContext {
    std::vector<double> mu;
    std::vector<double> sigma;
    double eps = 1e-5;
};

inline constexpr double kDefaultEps = 1e-5;

/// Per-feature mean and sample std (denominator L-1) of a lookback window.
inline NormContext instance_stats(const Matrix& x, double eps) {
    if (x.rows() < 2) throw TooShort("lookback needs at least 2 steps for a sample std");
    const std::size_t steps = x.rows();
    NormContext ctx{std::vector<double>(x.cols(), 0.0), std::vector<double>(x.cols(), 0.0), eps};
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t k = 0; k < x.cols(); ++k) ctx.mu[k] += x(t, k);
    for (auto& m : ctx.mu) m /= static_cast<double>(steps);
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double dev = x(t, k) - ctx.mu[k];
            ctx.sigma[k] += dev * dev;
        }
    for (auto& s : ctx.sigma) s = std::sqrt(s / static_cast<double>(steps - 1));
    return ctx;
}

inline std::pair<Matrix, NormContext> zscore_normalize(const Matrix& x, double eps = kDefaultEps) {
    NormContext ctx = instance_stats(x, eps);
    Matrix out(x.rows(), x.cols());
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (std::size_t k = 0; k < x.cols(); ++k) out(t, k) = (x(t, k) - ctx.mu[k]) / (ctx.sigma[k] + eps);
    return {std::move(out), std::move(ctx)};
}

inline Matrix zscore_denormalize(const Matrix& y_bar, const NormContext& ctx) {
    if (y_bar.cols() != ctx.mu.size()) throw ShapeMismatch("zscore_denormalize: feature count");
    Matrix out(y_bar.rows(), y_bar.cols());
    for (std::size_t n = 0; n < y_bar.rows(); ++n)
        for (std::size_t k = 0; k < y_bar.cols(); ++k)
            out(n, k) = y_bar(n, k) * (ctx.sigma[k] + ctx.eps) + ctx.mu[k];
    return out;
}

// ---------------------------------------------------------------------------
// LD: learnable per-step shift (and optional scale)
// ---------------------------------------------------------------------------

/**
 * LD parameters as owning matrices.
 *
 * Shapes broadcast: A is L x D at point level or 1 x D at instance level, and a
 * single column shares the matrix across features. B and Q are present only
 * with `use_scale` and must be strictly positive.
 */
struct LDParams {
    Matrix A;
    Matrix P;
    std::optional<Matrix> B;
    std::optional<Matrix> Q;
    bool use_scale = false;
};

inline MatView view_of(const Matrix& m) { return {m.flat().data(), m.rows(), m.cols()}; }

namespace detail {

inline void check_broadcast(const MatView& p, std::size_t rows, std::size_t cols, const char* what) {
    if ((p.rows != rows && p.rows != 1) || (p.cols != cols && p.cols != 1))
        throw ShapeMismatch(std::string(what) + " does not broadcast to " + std::to_string(rows) + "x" +
                            std::to_string(cols));
}

}  // namespace detail

/// x_tilde = (x_bar - A) / B elementwise, or x_bar - A without scale.
inline Matrix ld_shift(const Matrix& x_bar, MatView a, const MatView* b) {
    detail::check_broadcast(a, x_bar.rows(), x_bar.cols(), "LD shift A");
    if (b) detail::check_broadcast(*b, x_bar.rows(), x_bar.cols(), "LD scale B");
    Matrix out(x_bar.rows(), x_bar.cols());
    for (std::size_t t = 0; t < x_bar.rows(); ++t)
        for (std::size_t k = 0; k < x_bar.cols(); ++k) {
            const double centered = x_bar(t, k) - a(t, k);
            out(t, k) = b ? centered / (*b)(t, k) : centered;
        }
    return out;
}

/// y_bar = y_tilde * Q + P elementwise, or y_tilde + P without scale.
inline Matrix ld_unshift(const Matrix& y_tilde, MatView p, const MatView* q) {
    detail::check_broadcast(p, y_tilde.rows(), y_tilde.cols(), "LD shift P");
    if (q) detail::check_broadcast(*q, y_tilde.rows(), y_tilde.cols(), "LD scale Q");
    Matrix out(y_tilde.rows(), y_tilde.cols());
    for (std::size_t n = 0; n < y_tilde.rows(); ++n)
        for (std::size_t k = 0; k < y_tilde.cols(); ++k)
            out(n, k) = (q ? y_tilde(n, k) * (*q)(n, k) : y_tilde(n, k)) + p(n, k);
    return out;
}

inline Matrix ld_normalize(const Matrix& x_bar, const LDParams& params) {
    if (params.use_scale) {
        if (!params.B) throw ShapeMismatch("LD use_scale without B");
        const MatView b = view_of(*params.B);
        return ld_shift(x_bar, view_of(params.A), &b);
    }
    return ld_shift(x_bar, view_of(params.A), nullptr);
}

inline Matrix ld_denormalize(const Matrix& y_tilde, const LDParams& params) {
    if (params.use_scale) {
        if (!params.Q) throw ShapeMismatch("LD use_scale without Q");
        const MatView q = view_of(*params.Q);
        return ld_unshift(y_tilde, view_of(params.P), &q);
    }
    return ld_unshift(y_tilde, view_of(params.P), nullptr);
}

// ---------------------------------------------------------------------------
// RevIN-style affine pair
// ---------------------------------------------------------------------------

struct RevINParams {
    std::vector<double> gamma;
    std::vector<double> beta;
};

inline Matrix revin_normalize(const Matrix& x_bar, const RevINParams& params) {
    if (params.gamma.size() != x_bar.cols() || params.beta.size() != x_bar.cols())
        throw ShapeMismatch("revin_normalize: feature count");
    Matrix out(x_bar.rows(), x_bar.cols());
    for (std::size_t t = 0; t < x_bar.rows(); ++t)
        for (std::size_t k = 0; k < x_bar.cols(); ++k)
            out(t, k) = params.gamma[k] * x_bar(t, k) + params.beta[k];
    return out;
}

inline Matrix revin_denormalize(const Matrix& y_tilde, const RevINParams& params) {
    if (params.gamma.size() != y_tilde.cols() || params.beta.size() != y_tilde.cols())
        throw ShapeMismatch("revin_denormalize: feature count");
    for (std::size_t k = 0; k < params.gamma.size(); ++k)
        if (std::abs(params.gamma[k]) < 1e-12)
            throw DivisionByZero("revin gamma[" + std::to_string(k) + "] is zero");
    Matrix out(y_tilde.rows(), y_tilde.cols());
    for (std::size_t n = 0; n < y_tilde.rows(); ++n)
        for (std::size_t k = 0; k < y_tilde.cols(); ++k)
            out(n, k) = (y_tilde(n, k) - params.beta[k]) / params.gamma[k];
    return out;
}

// ---------------------------------------------------------------------------
// LCD: predicted horizon mean and per-step scaling coefficients
// ---------------------------------------------------------------------------

enum class Level { point, instance };
enum class LcdVariant { linear, attention };

/**
 * LCD weights.
 *
 * Each weight tensor is a stack of matrices, one per feature (`individual`) or one
 * shared. `h` holds 1 x L mean predictors; `f` holds Hs x L scale predictors for
 * the linear variant; `u`, `v`, `w` hold the query/key/value maps for the attention
 * variant. Hs = H at point level and 1 at instance level.
 */
struct LCDParams {
    LcdVariant variant = LcdVariant::linear;
    Level level = Level::point;
    bool individual = true;
    bool centered_input = true;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t features = 0;
    std::vector<double> h;
    std::vector<double> f;
    std::vector<double> u;
    std::vector<double> v;
    std::vector<double> w;

    std::size_t stacks() const { return individual ? features : 1; }
    std::size_t scale_rows() const { return level == Level::point ? horizon : 1; }

    /// All-zero weights: s == 1 and the predicted mean is 0.
    static LCDParams zeros(LcdVariant variant, Level level, bool individual, std::size_t lookback,
                           std::size_t horizon, std::size_t features) {
        LCDParams p;
        p.variant = variant;
        p.level = level;
        p.individual = individual;
        p.lookback = lookback;
        p.horizon = horizon;
        p.features = features;
        const std::size_t map = p.stacks() * p.scale_rows() * lookback;
        p.h.assign(p.stacks() * lookback, 0.0);
        if (variant == LcdVariant::linear) {
            p.f.assign(map, 0.0);
        } else {
            p.u.assign(map, 0.0);
            p.v.assign(map, 0.0);
            p.w.assign(map, 0.0);
        }
        return p;
    }

    StackView h_view() const { return {h.data(), stacks(), 1, lookback}; }
    StackView f_view() const { return {f.data(), stacks(), scale_rows(), lookback}; }
    StackView u_view() const { return {u.data(), stacks(), scale_rows(), lookback}; }
    StackView v_view() const { return {v.data(), stacks(), scale_rows(), lookback}; }
    StackView w_view() const { return {w.data(), stacks(), scale_rows(), lookback}; }
};

/// Predicted horizon statistics produced by the LCD normalize pass.
struct InnerState {
    Matrix s;                       // H x D scaling coefficients
    std::vector<double> mu_y_hat;   // D predicted horizon means
};

/// Per-feature intermediates of the attention scale network.
struct AttentionCache {
    std::vector<double> a;      // |u[:,k]|, length L
    std::vector<double> q;      // Hs
    std::vector<double> e;      // Hs
    std::vector<double> v;      // Hs
    std::vector<double> alpha;  // Hs x Hs, row-softmax
};

inline std::pair<Matrix, std::vector<double>> lcd_center(const Matrix& x) {
    if (x.rows() < 1) throw TooShort("lcd_center: empty lookback");
    std::vector<double> mu(x.cols(), 0.0);
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (std::size_t k = 0; k < x.cols(); ++k) mu[k] += x(t, k);
    for (auto& m : mu) m /= static_cast<double>(x.rows());
    Matrix centered(x.rows(), x.cols());
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (std::size_t k = 0; k < x.cols(); ++k) centered(t, k) = x(t, k) - mu[k];
    return {std::move(centered), std::move(mu)};
}

/// mu_y_hat[k] = h_k . x[:, k], no bias.
inline std::vector<double> lcd_predict_mean(const Matrix& x, StackView h) {
    if (h.cols != x.rows()) throw ShapeMismatch("lcd_predict_mean: h length differs from L");
    std::vector<double> out(x.cols(), 0.0);
    for (std::size_t k = 0; k < x.cols(); ++k) {
        const double* hk = h.at(k);
        double acc = 0.0;
        for (std::size_t t = 0; t < x.rows(); ++t) acc += hk[t] * x(t, k);
        out[k] = acc;
    }
    return out;
}

inline std::vector<double> lcd_predict_mean(const Matrix& x, const LCDParams& params) {
    return lcd_predict_mean(x, params.h_view());
}

/// s[n,k] = f_{n,k} . u[:,k] + 1; a single row of f is broadcast to all H steps.
inline Matrix lcd_scales_linear(const Matrix& u, StackView f, std::size_t horizon) {
    if (f.cols != u.rows()) throw ShapeMismatch("lcd_scales_linear: f width differs from L");
    Matrix s(horizon, u.cols());
    for (std::size_t k = 0; k < u.cols(); ++k) {
        const double* fk = f.at(k);
        for (std::size_t r = 0; r < f.rows; ++r) {
            double acc = 1.0;
            for (std::size_t t = 0; t < u.rows(); ++t) acc += fk[r * f.cols + t] * u(t, k);
            if (f.rows == 1) {
                for (std::size_t n = 0; n < horizon; ++n) s(n, k) = acc;
            } else {
                s(r, k) = acc;
            }
        }
    }
    return s;
}

inline Matrix lcd_scales_linear(const Matrix& u, const LCDParams& params) {
    return lcd_scales_linear(u, params.f_view(), params.horizon);
}

/**
 * Attention-score scaling coefficients.
 *
 * For each feature: a = |u[:,k]|, query q = U a, key e = V a, value v = W a (length Hs),
 * alpha = row-softmax(q e^T / sqrt(Hs)), s[:,k] = 1 + alpha v. With Hs = 1 the single
 * coefficient is broadcast over the horizon.
 */
inline Matrix lcd_scales_attention(const Matrix& u, StackView uq, StackView vk, StackView wv, std::size_t horizon,
                                   std::vector<AttentionCache>* caches = nullptr) {
    if (uq.cols != u.rows()) throw ShapeMismatch("lcd_scales_attention: map width differs from L");
    const std::size_t steps = u.rows();
    const std::size_t hs = uq.rows;
    const double temp = 1.0 / std::sqrt(static_cast<double>(hs));
    Matrix s(horizon, u.cols());
    if (caches) caches->assign(u.cols(), {});
    AttentionCache local;
    for (std::size_t k = 0; k < u.cols(); ++k) {
        AttentionCache& c = caches ? (*caches)[k] : local;
        c.a.resize(steps);
        for (std::size_t t = 0; t < steps; ++t) c.a[t] = std::abs(u(t, k));
        c.q.assign(hs, 0.0);
        c.e.assign(hs, 0.0);
        c.v.assign(hs, 0.0);
        const double* U = uq.at(k);
        const double* V = vk.at(k);
        const double* W = wv.at(k);
        for (std::size_t i = 0; i < hs; ++i)
            for (std::size_t t = 0; t < steps; ++t) {
                c.q[i] += U[i * steps + t] * c.a[t];
                c.e[i] += V[i * steps + t] * c.a[t];
                c.v[i] += W[i * steps + t] * c.a[t];
            }
        c.alpha.assign(hs * hs, 0.0);
        for (std::size_t i = 0; i < hs; ++i) {
            double* row = c.alpha.data() + i * hs;
            double peak = -INFINITY;
            for (std::size_t j = 0; j < hs; ++j) {
                row[j] = temp * c.q[i] * c.e[j];
                peak = std::max(peak, row[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j < hs; ++j) {
                row[j] = std::exp(row[j] - peak);
                z += row[j];
            }
            double out = 1.0;
            for (std::size_t j = 0; j < hs; ++j) {
                row[j] /= z;
                out += row[j] * c.v[j];
            }
            if (hs == 1) {
                for (std::size_t n = 0; n < horizon; ++n) s(n, k) = out;
            } else {
                s(i, k) = out;
            }
        }
    }
    return s;
}

inline Matrix lcd_scales_attention(const Matrix& u, const LCDParams& params) {
    return lcd_scales_attention(u, params.u_view(), params.v_view(), params.w_view(), params.horizon);
}

/// y_hat[n,k] = y_tilde[n,k] * s[n,k] + mu_y_hat[k].
inline Matrix lcd_denormalize(const Matrix& y_tilde, const InnerState& state) {
    require_same_shape(y_tilde, state.s, "lcd_denormalize");
    if (state.mu_y_hat.size() != y_tilde.cols()) throw ShapeMismatch("lcd_denormalize: mean size");
    Matrix out(y_tilde.rows(), y_tilde.cols());
    for (std::size_t n = 0; n < y_tilde.rows(); ++n)
        for (std::size_t k = 0; k < y_tilde.cols(); ++k)
            out(n, k) = y_tilde(n, k) * state.s(n, k) + state.mu_y_hat[k];
    return out;
}

/// Full LCD normalize pass on a raw lookback: backbone input plus the state to undo it.
inline std::pair<Matrix, InnerState> lcd_normalize(const Matrix& x, const LCDParams& params) {
    auto [centered, mu] = lcd_center(x);
    const Matrix& scale_input = params.centered_input ? centered : x;
    InnerState state;
    state.mu_y_hat = lcd_predict_mean(x, params);
    state.s = params.variant == LcdVariant::linear ? lcd_scales_linear(scale_input, params)
                                                   : lcd_scales_attention(scale_input, params);
    return {std::move(centered), std::move(state)};
}

// ---------------------------------------------------------------------------
// Parameter-count formulas
// ---------------------------------------------------------------------------

/**
 * Trainable scalar count of a normalization method.
 *
 * Known names: revin (2D), dish-ts (2DL), san (1024(L+2H+PL)/P), nst (6L+128(4D+256+1+L)),
 * ld (D(L+H)), lcd-linear (DL(H+1)), lcd-as (DL(3H+1)).
 */
inline std::uint64_t param_count(const std::string& method, std::uint64_t d, std::uint64_t l, std::uint64_t h,
                                 std::uint64_t slice = 0) {
    if (method == "revin") return 2 * d;
    if (method == "dish-ts") return 2 * d * l;
    if (method == "san") {
        if (slice == 0) throw ConfigError("P_slice", "SAN needs a positive slice length");
        return 1024 * (l + 2 * h + slice * l) / slice;
    }
    if (method == "nst") return 6 * l + 128 * (4 * d + 256 + 1 + l);
    if (method == "ld") return d * (l + h);
    if (method == "lcd-linear") return d * l * (h + 1);
    if (method == "lcd-as") return d * l * (3 * h + 1);
    throw UnknownMethod("unknown normalization method '" + method + "'");
}

// ---------------------------------------------------------------------------
// Trainable normalizer over a flat parameter vector
// ---------------------------------------------------------------------------

enum class NormMethod { zscore, center, revin, ld, lcd_linear, lcd_attention };

inline const char* method_name(NormMethod m) {
    switch (m) {
        case NormMethod::zscore: return "zscore";
        case NormMethod::center: return "center";
        case NormMethod::revin: return "revin";
        case NormMethod::ld: return "ld";
        case NormMethod::lcd_linear: return "lcd-linear";
        case NormMethod::lcd_attention: return "lcd-as";
    }
    return "?";
}

inline std::optional<NormMethod> parse_method(const std::string& name) {
    for (auto m : {NormMethod::zscore, NormMethod::center, NormMethod::revin, NormMethod::ld,
                   NormMethod::lcd_linear, NormMethod::lcd_attention})
        if (name == method_name(m)) return m;
    return std::nullopt;
}

struct NormalizerSpec {
    NormMethod method = NormMethod::zscore;
    Level level = Level::point;
    bool individual = true;
    bool centered_input = true;
    bool use_scale = false;
    double eps = kDefaultEps;
};

/// Window geometry shared by a pipeline's components.
struct WindowShape {
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t features = 0;
};

/// Everything the normalizer's backward passes need from one forward.
struct NormTrace {
    NormContext ctx;
    Matrix x;        // raw lookback
    Matrix x_bar;    // z-scored lookback (revin, ld)
    Matrix u;        // LCD scale-network input
    Matrix y_tilde;  // backbone output
    InnerState inner;
    std::vector<AttentionCache> attention;
    std::vector<double> center_mu;
};

inline double softplus(double r) { return r > 30.0 ? r : std::log1p(std::exp(r)); }
inline double sigmoid(double r) { return 1.0 / (1.0 + std::exp(-r)); }
/// Raw value whose softplus is exactly 1 up to rounding.
inline double softplus_inverse_one() { return std::log(std::exp(1.0) - 1.0); }

/**
 * A normalization method bound to a window shape and a slice of the pipeline's
 * flat parameter vector. Stateless between instances: everything needed for the
 * backward pass travels in NormTrace.
 */
class Normalizer {
public:
    Normalizer() = default;
    Normalizer(NormalizerSpec spec, WindowShape shape) : spec_(spec), shape_(shape) {}

    const NormalizerSpec& spec() const { return spec_; }

    void allocate(ParamLayout& layout) {
        const std::size_t d = spec_.individual ? shape_.features : 1;
        const bool point = spec_.level == Level::point;
        const std::size_t in_rows = point ? shape_.lookback : 1;
        const std::size_t out_rows = point ? shape_.horizon : 1;
        switch (spec_.method) {
            case NormMethod::zscore:
            case NormMethod::center:
                break;
            case NormMethod::revin:
                gamma_ = layout.add("revin.gamma", shape_.features);
                beta_ = layout.add("revin.beta", shape_.features);
                break;
            case NormMethod::ld:
                a_ = layout.add("ld.A", in_rows * d);
                p_ = layout.add("ld.P", out_rows * d);
                if (spec_.use_scale) {
                    b_ = layout.add("ld.B_raw", in_rows * d);
                    q_ = layout.add("ld.Q_raw", out_rows * d);
                }
                break;
            case NormMethod::lcd_linear:
                h_ = layout.add("lcd.h", d * shape_.lookback);
                f_ = layout.add("lcd.f", d * out_rows * shape_.lookback);
                break;
            case NormMethod::lcd_attention:
                h_ = layout.add("lcd.h", d * shape_.lookback);
                f_ = layout.add("lcd.U", d * out_rows * shape_.lookback);
                fv_ = layout.add("lcd.V", d * out_rows * shape_.lookback);
                fw_ = layout.add("lcd.W", d * out_rows * shape_.lookback);
                break;
        }
    }

    /// Neutral starting point: RevIN gamma=1 beta=0, LD A=P=0 and B=Q=1, LCD weights 0.
    void init_neutral(std::span<double> params) const {
        if (spec_.method == NormMethod::revin)
            for (std::size_t k = 0; k < shape_.features; ++k) {
                params[gamma_ + k] = 1.0;
                params[beta_ + k] = 0.0;
            }
        if (spec_.method == NormMethod::ld && spec_.use_scale) {
            const double raw = softplus_inverse_one();
            for (std::size_t i = 0; i < a_view(params).rows * a_view(params).cols; ++i) params[b_ + i] = raw;
            for (std::size_t i = 0; i < p_view(params).rows * p_view(params).cols; ++i) params[q_ + i] = raw;
        }
    }

    /// True when the backbone must propagate a gradient back to its input.
    bool needs_input_grad() const { return spec_.method == NormMethod::revin || spec_.method == NormMethod::ld; }

    /// Raw lookback -> backbone input.
    Matrix normalize(const Matrix& x, std::span<const double> params, NormTrace& tr) const {
        switch (spec_.method) {
            case NormMethod::zscore: {
                auto [x_bar, ctx] = zscore_normalize(x, spec_.eps);
                tr.ctx = std::move(ctx);
                return std::move(x_bar);
            }
            case NormMethod::center: {
                auto [centered, mu] = lcd_center(x);
                tr.center_mu = std::move(mu);
                return std::move(centered);
            }
            case NormMethod::revin: {
                auto [x_bar, ctx] = zscore_normalize(x, spec_.eps);
                tr.ctx = std::move(ctx);
                tr.x_bar = std::move(x_bar);
                return revin_normalize(tr.x_bar, revin_params(params));
            }
            case NormMethod::ld: {
                auto [x_bar, ctx] = zscore_normalize(x, spec_.eps);
                tr.ctx = std::move(ctx);
                tr.x_bar = std::move(x_bar);
                if (spec_.use_scale) {
                    const Matrix b = positive(params, b_, a_view(params));
                    const MatView bv{b.flat().data(), a_view(params).rows, a_view(params).cols};
                    return ld_shift(tr.x_bar, a_view(params), &bv);
                }
                return ld_shift(tr.x_bar, a_view(params), nullptr);
            }
            case NormMethod::lcd_linear:
            case NormMethod::lcd_attention: {
                auto [centered, mu] = lcd_center(x);
                tr.x = x;
                tr.u = spec_.centered_input ? centered : x;
                tr.inner.mu_y_hat = lcd_predict_mean(x, stack(params, h_, 1));
                const std::size_t rows = spec_.level == Level::point ? shape_.horizon : 1;
                if (spec_.method == NormMethod::lcd_linear) {
                    tr.inner.s = lcd_scales_linear(tr.u, stack(params, f_, rows), shape_.horizon);
                } else {
                    tr.inner.s = lcd_scales_attention(tr.u, stack(params, f_, rows), stack(params, fv_, rows),
                                                      stack(params, fw_, rows), shape_.horizon, &tr.attention);
                }
                return std::move(centered);
            }
        }
        return {};
    }

    /// Backbone output -> final prediction in the input's units.
    Matrix denormalize(const Matrix& y_tilde, std::span<const double> params, NormTrace& tr) const {
        tr.y_tilde = y_tilde;
        switch (spec_.method) {
            case NormMethod::zscore:
                return zscore_denormalize(y_tilde, tr.ctx);
            case NormMethod::center: {
                Matrix out = y_tilde;
                for (std::size_t n = 0; n < out.rows(); ++n)
                    for (std::size_t k = 0; k < out.cols(); ++k) out(n, k) += tr.center_mu[k];
                return out;
            }
            case NormMethod::revin:
                return zscore_denormalize(revin_denormalize(y_tilde, revin_params(params)), tr.ctx);
            case NormMethod::ld: {
                if (spec_.use_scale) {
                    const Matrix q = positive(params, q_, p_view(params));
                    const MatView qv{q.flat().data(), p_view(params).rows, p_view(params).cols};
                    return zscore_denormalize(ld_unshift(y_tilde, p_view(params), &qv), tr.ctx);
                }
                return zscore_denormalize(ld_unshift(y_tilde, p_view(params), nullptr), tr.ctx);
            }
            case NormMethod::lcd_linear:
            case NormMethod::lcd_attention:
                return lcd_denormalize(y_tilde, tr.inner);
        }
        return {};
    }

    /// Gradient through denormalize: accumulates parameter grads, returns dL/dy_tilde.
    Matrix backward_denormalize(const Matrix& d_out, std::span<const double> params, const NormTrace& tr,
                                std::span<double> grad) const {
        const std::size_t rows = d_out.rows();
        const std::size_t cols = d_out.cols();
        Matrix d_tilde(rows, cols);
        switch (spec_.method) {
            case NormMethod::zscore:
                for (std::size_t n = 0; n < rows; ++n)
                    for (std::size_t k = 0; k < cols; ++k)
                        d_tilde(n, k) = d_out(n, k) * (tr.ctx.sigma[k] + tr.ctx.eps);
                break;
            case NormMethod::center:
                d_tilde = d_out;
                break;
            case NormMethod::revin:
                for (std::size_t n = 0; n < rows; ++n)
                    for (std::size_t k = 0; k < cols; ++k) {
                        const double g = params[gamma_ + k];
                        const double b = params[beta_ + k];
                        const double d_bar = d_out(n, k) * (tr.ctx.sigma[k] + tr.ctx.eps);
                        d_tilde(n, k) = d_bar / g;
                        grad[beta_ + k] -= d_bar / g;
                        grad[gamma_ + k] -= d_bar * (tr.y_tilde(n, k) - b) / (g * g);
                    }
                break;
            case NormMethod::ld: {
                const MatView pv = p_view(params);
                for (std::size_t n = 0; n < rows; ++n)
                    for (std::size_t k = 0; k < cols; ++k) {
                        const double d_bar = d_out(n, k) * (tr.ctx.sigma[k] + tr.ctx.eps);
                        const std::size_t idx = pv.index(n, k);
                        grad[p_ + idx] += d_bar;
                        if (spec_.use_scale) {
                            const double raw = params[q_ + idx];
                            d_tilde(n, k) = d_bar * softplus(raw);
                            grad[q_ + idx] += d_bar * tr.y_tilde(n, k) * sigmoid(raw);
                        } else {
                            d_tilde(n, k) = d_bar;
                        }
                    }
                break;
            }
            case NormMethod::lcd_linear:
            case NormMethod::lcd_attention: {
                Matrix d_scale(rows, cols);
                for (std::size_t n = 0; n < rows; ++n)
                    for (std::size_t k = 0; k < cols; ++k) {
                        d_tilde(n, k) = d_out(n, k) * tr.inner.s(n, k);
                        d_scale(n, k) = d_out(n, k) * tr.y_tilde(n, k);
                    }
                const StackView h = stack(params, h_, 1);
                for (std::size_t k = 0; k < cols; ++k) {
                    double d_mean = 0.0;
                    for (std::size_t n = 0; n < rows; ++n) d_mean += d_out(n, k);
                    const std::size_t base = h_ + h.offset(k);
                    for (std::size_t t = 0; t < shape_.lookback; ++t) grad[base + t] += d_mean * tr.x(t, k);
                }
                if (spec_.method == NormMethod::lcd_linear)
                    backward_scales_linear(d_scale, params, tr, grad);
                else
                    backward_scales_attention(d_scale, params, tr, grad);
                break;
            }
        }
        return d_tilde;
    }

    /// Gradient through normalize given dL/d(backbone input).
    void backward_normalize(const Matrix& d_in, std::span<const double> params, const NormTrace& tr,
                            std::span<double> grad) const {
        if (spec_.method == NormMethod::revin) {
            for (std::size_t t = 0; t < d_in.rows(); ++t)
                for (std::size_t k = 0; k < d_in.cols(); ++k) {
                    grad[gamma_ + k] += d_in(t, k) * tr.x_bar(t, k);
                    grad[beta_ + k] += d_in(t, k);
                }
        } else if (spec_.method == NormMethod::ld) {
            const MatView av = a_view(params);
            for (std::size_t t = 0; t < d_in.rows(); ++t)
                for (std::size_t k = 0; k < d_in.cols(); ++k) {
                    const std::size_t idx = av.index(t, k);
                    if (spec_.use_scale) {
                        const double raw = params[b_ + idx];
                        const double b = softplus(raw);
                        const double centered = tr.x_bar(t, k) - av(t, k);
                        grad[a_ + idx] -= d_in(t, k) / b;
                        grad[b_ + idx] -= d_in(t, k) * centered / (b * b) * sigmoid(raw);
                    } else {
                        grad[a_ + idx] -= d_in(t, k);
                    }
                }
        }
    }

private:
    MatView a_view(std::span<const double> params) const {
        const bool point = spec_.level == Level::point;
        return {params.data() + a_, point ? shape_.lookback : 1, spec_.individual ? shape_.features : 1};
    }
    MatView p_view(std::span<const double> params) const {
        const bool point = spec_.level == Level::point;
        return {params.data() + p_, point ? shape_.horizon : 1, spec_.individual ? shape_.features : 1};
    }
    StackView stack(std::span<const double> params, std::size_t offset, std::size_t rows) const {
        return {params.data() + offset, spec_.individual ? shape_.features : 1, rows, shape_.lookback};
    }
    RevINParams revin_params(std::span<const double> params) const {
        return {{params.begin() + static_cast<long>(gamma_), params.begin() + static_cast<long>(gamma_ + shape_.features)},
                {params.begin() + static_cast<long>(beta_), params.begin() + static_cast<long>(beta_ + shape_.features)}};
    }
    static Matrix positive(std::span<const double> params, std::size_t offset, MatView shape) {
        Matrix out(shape.rows, shape.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] = softplus(params[offset + i]);
        return out;
    }

    void backward_scales_linear(const Matrix& d_scale, std::span<const double> params, const NormTrace& tr,
                                std::span<double> grad) const {
        const std::size_t rows = spec_.level == Level::point ? shape_.horizon : 1;
        const StackView f = stack(params, f_, rows);
        const std::size_t steps = shape_.lookback;
        for (std::size_t k = 0; k < d_scale.cols(); ++k) {
            const std::size_t base = f_ + f.offset(k);
            for (std::size_t n = 0; n < d_scale.rows(); ++n) {
                const std::size_t r = rows == 1 ? 0 : n;
                const double ds = d_scale(n, k);
                for (std::size_t t = 0; t < steps; ++t) grad[base + r * steps + t] += ds * tr.u(t, k);
            }
        }
    }

    void backward_scales_attention(const Matrix& d_scale, std::span<const double> params, const NormTrace& tr,
                                   std::span<double> grad) const {
        const std::size_t hs = spec_.level == Level::point ? shape_.horizon : 1;
        const std::size_t steps = shape_.lookback;
        const double temp = 1.0 / std::sqrt(static_cast<double>(hs));
        const StackView uq = stack(params, f_, hs);
        const StackView vk = stack(params, fv_, hs);
        const StackView wv = stack(params, fw_, hs);
        std::vector<double> d_o(hs), d_v(hs), d_q(hs), d_e(hs), d_logit(hs * hs);
        for (std::size_t k = 0; k < d_scale.cols(); ++k) {
            const AttentionCache& c = tr.attention[k];
            std::fill(d_o.begin(), d_o.end(), 0.0);
            for (std::size_t n = 0; n < d_scale.rows(); ++n) d_o[hs == 1 ? 0 : n] += d_scale(n, k);

            std::fill(d_v.begin(), d_v.end(), 0.0);
            for (std::size_t i = 0; i < hs; ++i) {
                const double* row = c.alpha.data() + i * hs;
                double dot = 0.0;  // sum_j alpha_ij * d_alpha_ij
                for (std::size_t j = 0; j < hs; ++j) {
                    d_v[j] += row[j] * d_o[i];
                    dot += row[j] * d_o[i] * c.v[j];
                }
                for (std::size_t j = 0; j < hs; ++j) d_logit[i * hs + j] = row[j] * (d_o[i] * c.v[j] - dot);
            }
            for (std::size_t i = 0; i < hs; ++i) {
                double dq = 0.0;
                double de = 0.0;
                for (std::size_t j = 0; j < hs; ++j) {
                    dq += d_logit[i * hs + j] * c.e[j];
                    de += d_logit[j * hs + i] * c.q[j];
                }
                d_q[i] = temp * dq;
                d_e[i] = temp * de;
            }
            const std::size_t bu = f_ + uq.offset(k);
            const std::size_t bv = fv_ + vk.offset(k);
            const std::size_t bw = fw_ + wv.offset(k);
            for (std::size_t i = 0; i < hs; ++i)
                for (std::size_t t = 0; t < steps; ++t) {
                    grad[bu + i * steps + t] += d_q[i] * c.a[t];
                    grad[bv + i * steps + t] += d_e[i] * c.a[t];
                    grad[bw + i * steps + t] += d_v[i] * c.a[t];
                }
        }
    }

    NormalizerSpec spec_;
    WindowShape shape_;
    std::size_t gamma_ = 0, beta_ = 0;
    std::size_t a_ = 0, p_ = 0, b_ = 0, q_ = 0;
    std::size_t h_ = 0, f_ = 0, fv_ = 0, fw_ = 0;
};

}  // namespace pointnorm

#endif  // POINTNORM_NORMALIZERS_HPP
