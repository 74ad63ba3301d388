#ifndef POINTNORM_DATASET_HPP
#define POINTNORM_DATASET_HPP

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pointnorm/error.hpp"
#include "pointnorm/matrix.hpp"

namespace pointnorm {

/// Raw multivariate series: T rows, D features.
struct SeriesFrame {
    Matrix values;
    std::vector<std::string> feature_names;
    std::optional<std::vector<std::string>> timestamps;

    std::size_t length() const { return values.rows(); }
    std::size_t features() const { return values.cols(); }
};

/// Per-feature mean and sample standard deviation fitted on the train split.
struct StandardStats {
    std::vector<double> mean;
    std::vector<double> std;
};

/// Half-open index interval [begin, end).
struct Interval {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t length() const { return end - begin; }
    bool operator==(const Interval&) const = default;
};

struct SplitSpec {
    Interval train;
    Interval val;
    Interval test;
};

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

/// One forecasting sample: lookback x (L x D) and horizon y (H x D).
struct InstancePair {
    Matrix x;
    Matrix y;
    std::size_t origin_index = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '"'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return cells;
}

inline std::optional<double> parse_real(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

}  // namespace detail

/**
 * Parse CSV text into a SeriesFrame.
 *
 * A header row is recognised when any of its value cells fails to parse as a
 * real. With `has_timestamp_column` the first column is kept verbatim as the
 * timestamp and excluded from the values. Row and column numbers in
 * ParseError are 1-based positions in the file.
 */
inline SeriesFrame parse_csv(std::istream& in, bool has_timestamp_column) {
    SeriesFrame frame;
    std::vector<double> values;
    std::vector<std::string> stamps;
    std::size_t width = 0;
    std::size_t rows = 0;
    std::size_t line_no = 0;
    bool first = true;
    std::string line;
    const std::size_t skip = has_timestamp_column ? 1 : 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_commas(line);
        if (cells.size() <= skip) throw ParseError(line_no, cells.size(), std::string(line));

        if (first) {
            first = false;
            width = cells.size();
            bool header = false;
            for (std::size_t c = skip; c < cells.size(); ++c)
                if (!detail::parse_real(cells[c])) header = true;
            if (header) {
                for (std::size_t c = skip; c < cells.size(); ++c) frame.feature_names.emplace_back(cells[c]);
                continue;
            }
        }
        if (cells.size() != width)
            throw ParseError(line_no, cells.size(), "expected " + std::to_string(width) + " columns");
        for (std::size_t c = skip; c < cells.size(); ++c) {
            auto v = detail::parse_real(cells[c]);
            if (!v) throw ParseError(line_no, c + 1, std::string(cells[c]));
            values.push_back(*v);
        }
        if (has_timestamp_column) stamps.emplace_back(cells[0]);
        ++rows;
    }
    if (rows < 2) throw EmptyDataset("series needs at least 2 rows, found " + std::to_string(rows));

    const std::size_t d = width - skip;
    frame.values = Matrix(rows, d);
    std::copy(values.begin(), values.end(), frame.values.flat().begin());
    if (frame.feature_names.empty())
        for (std::size_t k = 0; k < d; ++k) frame.feature_names.push_back("f" + std::to_string(k));
    if (has_timestamp_column) frame.timestamps = std::move(stamps);
    return frame;
}

inline SeriesFrame load_csv(const std::string& path, bool has_timestamp_column) {
    std::ifstream in(path);
    if (!in) throw IOError("cannot open " + path);
    return parse_csv(in, has_timestamp_column);
}

/// Write in the format parse_csv reads back: header row, then one row per step.
inline void write_csv(std::ostream& out, const SeriesFrame& frame) {
    const bool stamped = frame.timestamps.has_value();
    if (stamped) out << "date,";
    for (std::size_t k = 0; k < frame.features(); ++k) out << (k ? "," : "") << frame.feature_names[k];
    out << '\n';
    char buf[64];
    for (std::size_t t = 0; t < frame.length(); ++t) {
        if (stamped) out << (*frame.timestamps)[t] << ',';
        for (std::size_t k = 0; k < frame.features(); ++k) {
            // shortest round-trip representation
            const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, frame.values(t, k));
            out << (k ? "," : "") << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
        }
        out << '\n';
    }
}

/// Keep only the first `k` features (the "-s" reduced benchmark variants).
inline SeriesFrame truncate_features(const SeriesFrame& frame, std::size_t k) {
    if (k == 0 || k >= frame.features()) return frame;
    SeriesFrame out;
    out.values = Matrix(frame.length(), k);
    for (std::size_t t = 0; t < frame.length(); ++t)
        for (std::size_t c = 0; c < k; ++c) out.values(t, c) = frame.values(t, c);
    out.feature_names.assign(frame.feature_names.begin(), frame.feature_names.begin() + static_cast<long>(k));
    out.timestamps = frame.timestamps;
    return out;
}

/// Contiguous train/val/test split; train and val take floor(ratio * T), test the remainder.
inline SplitSpec make_split(std::size_t length, SplitRatios ratios = {}) {
    if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0)
        throw ConfigError("split", "ratios must be positive");
    if (ratios.train + ratios.val + ratios.test > 1.0 + 1e-9)
        throw ConfigError("split", "ratios sum above 1");
    // nudge before flooring so 0.7 * 100 does not land on 69.999...
    const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(length) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(length) + 1e-9));
    SplitSpec s;
    s.train = {0, n_train};
    s.val = {n_train, n_train + n_val};
    s.test = {n_train + n_val, length};
    return s;
}

inline StandardStats fit_standardizer(const SeriesFrame& frame, const SplitSpec& split) {
    const auto& range = split.train;
    if (range.length() < 2) throw TooShort("train split needs at least 2 rows for a sample std");
    const std::size_t d = frame.features();
    StandardStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    const auto n = static_cast<double>(range.length());
    for (std::size_t k = 0; k < d; ++k) {
        double sum = 0.0;
        for (std::size_t t = range.begin; t < range.end; ++t) sum += frame.values(t, k);
        const double mean = sum / n;
        double ss = 0.0;
        for (std::size_t t = range.begin; t < range.end; ++t) {
            const double dev = frame.values(t, k) - mean;
            ss += dev * dev;
        }
        stats.mean[k] = mean;
        stats.std[k] = std::sqrt(ss / (n - 1.0));
        if (!(stats.std[k] > 0.0)) throw DegenerateFeature(k);
    }
    return stats;
}

/// Standardize the whole frame (val and test included) with train statistics.
inline SeriesFrame apply_standardizer(const SeriesFrame& frame, const StandardStats& stats) {
    if (stats.mean.size() != frame.features() || stats.std.size() != frame.features())
        throw ShapeMismatch("standardizer has " + std::to_string(stats.mean.size()) + " features, frame has " +
                            std::to_string(frame.features()));
    SeriesFrame out = frame;
    for (std::size_t t = 0; t < frame.length(); ++t)
        for (std::size_t k = 0; k < frame.features(); ++k)
            out.values(t, k) = (frame.values(t, k) - stats.mean[k]) / stats.std[k];
    return out;
}

/// Number of windows `windows` would produce; throws TooShort when zero.
inline std::size_t window_count(Interval range, std::size_t lookback, std::size_t horizon, std::size_t stride) {
    if (stride == 0) throw ConfigError("stride", "must be at least 1");
    if (range.length() < lookback + horizon)
        throw TooShort("range of " + std::to_string(range.length()) + " rows is shorter than L+H=" +
                       std::to_string(lookback + horizon));
    return (range.length() - lookback - horizon) / stride + 1;
}

/// Sliding windows that stay inside `range`: x = [s, s+L), y = [s+L, s+L+H).
inline std::vector<InstancePair> windows(const SeriesFrame& frame, Interval range, std::size_t lookback,
                                         std::size_t horizon, std::size_t stride = 1) {
    if (range.end > frame.length()) throw ShapeMismatch("window range exceeds series length");
    if (lookback < 2) throw ConfigError("L", "lookback must be at least 2");
    if (horizon < 1) throw ConfigError("H", "horizon must be at least 1");
    const std::size_t count = window_count(range, lookback, horizon, stride);
    std::vector<InstancePair> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t s = range.begin + i * stride;
        out.push_back({frame.values.slice_rows(s, s + lookback),
                       frame.values.slice_rows(s + lookback, s + lookback + horizon), s});
    }
    return out;
}

}  // namespace pointnorm

#endif  // POINTNORM_DATASET_HPP
