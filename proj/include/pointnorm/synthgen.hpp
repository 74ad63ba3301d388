#ifndef POINTNORM_SYNTHGEN_HPP
#define POINTNORM_SYNTHGEN_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "pointnorm/dataset.hpp"
#include "pointnorm/error.hpp"

namespace pointnorm {

struct SynthConfig {
    std::size_t length = 4096;
    std::size_t features = 4;
    double regime_len_mean = 32.0;
    double mean_drift_scale = 0.5;
    double var_drift_scale = 0.1;
    double ar_coeff = 0.7;
    double noise_std = 1.0;
    std::uint64_t seed = 0;
};

inline void validate(const SynthConfig& c) {
    if (c.length < 2) throw ConfigError("synth.T", "must be at least 2");
    if (c.features < 1) throw ConfigError("synth.D", "must be at least 1");
    if (!(c.regime_len_mean >= 2.0)) throw ConfigError("synth.regime_len_mean", "must be at least 2");
    if (!(c.noise_std > 0.0)) throw ConfigError("synth.noise_std", "must be positive");
    if (!(c.ar_coeff > -1.0 && c.ar_coeff < 1.0)) throw ConfigError("synth.ar_coeff", "must lie in (-1, 1)");
    if (c.mean_drift_scale < 0.0) throw ConfigError("synth.mean_drift_scale", "must be non-negative");
    if (c.var_drift_scale < 0.0) throw ConfigError("synth.var_drift_scale", "must be non-negative");
}

/**
 * Regime-switching series with inner-instance shift.
 *
 * Each feature k runs its own std::mt19937_64 seeded with `seed ^ k`:
 *
 *     value_t = level_t + scale_t * e_t,   e_t = ar * e_{t-1} + N(0, noise_std^2)
 *
 * level and scale are piecewise constant. Regime lengths are 1 + Geometric(1/regime_len_mean)
 * (mean regime_len_mean). At each regime change the level takes a N(0, mean_drift_scale^2) step
 * and the scale is multiplied by exp(N(0, var_drift_scale^2)).
 */
inline SeriesFrame gen_piecewise(const SynthConfig& config) {
    validate(config);
    SeriesFrame frame;
    frame.values = Matrix(config.length, config.features);
    for (std::size_t k = 0; k < config.features; ++k) {
        frame.feature_names.push_back("s" + std::to_string(k));
        std::mt19937_64 rng(config.seed ^ static_cast<std::uint64_t>(k));
        std::normal_distribution<double> unit(0.0, 1.0);
        std::geometric_distribution<std::size_t> extra_len(1.0 / config.regime_len_mean);

        double level = 0.0;
        double scale = 1.0;
        double noise = 0.0;
        std::size_t remaining = 1 + extra_len(rng);
        for (std::size_t t = 0; t < config.length; ++t) {
            if (remaining == 0) {
                level += config.mean_drift_scale * unit(rng);
                scale *= std::exp(config.var_drift_scale * unit(rng));
                remaining = 1 + extra_len(rng);
            }
            --remaining;
            noise = config.ar_coeff * noise + config.noise_std * unit(rng);
            frame.values(t, k) = level + scale * noise;
        }
    }
    return frame;
}

/// Variance of the means of consecutive non-overlapping windows, averaged over features.
inline double window_mean_variance(const SeriesFrame& frame, std::size_t window) {
    const std::size_t n = frame.length() / window;
    if (n < 2) throw TooShort("need at least two windows");
    double total = 0.0;
    for (std::size_t k = 0; k < frame.features(); ++k) {
        std::vector<double> means(n, 0.0);
        for (std::size_t w = 0; w < n; ++w) {
            for (std::size_t t = 0; t < window; ++t) means[w] += frame.values(w * window + t, k);
            means[w] /= static_cast<double>(window);
        }
        double mu = 0.0;
        for (double m : means) mu += m;
        mu /= static_cast<double>(n);
        double ss = 0.0;
        for (double m : means) ss += (m - mu) * (m - mu);
        total += ss / static_cast<double>(n - 1);
    }
    return total / static_cast<double>(frame.features());
}

}  // namespace pointnorm

#endif  // POINTNORM_SYNTHGEN_HPP
