#ifndef POINTNORM_PARAMS_HPP
#define POINTNORM_PARAMS_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pointnorm/error.hpp"

namespace pointnorm {

/// Read-only matrix view that broadcasts a single row or column.
///
/// A 1 x D view reads the same row for every time step (instance level); an L x 1 view
/// reads the same column for every feature (shared across features).
struct MatView {
    const double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    double operator()(std::size_t t, std::size_t k) const {
        return data[(rows == 1 ? 0 : t) * cols + (cols == 1 ? 0 : k)];
    }
    std::size_t index(std::size_t t, std::size_t k) const {
        return (rows == 1 ? 0 : t) * cols + (cols == 1 ? 0 : k);
    }
};

/// Read-only view of a stack of (rows x cols) matrices, one per feature or one shared.
struct StackView {
    const double* data = nullptr;
    std::size_t count = 0;  // D when per-feature, 1 when shared
    std::size_t rows = 0;
    std::size_t cols = 0;

    const double* at(std::size_t feature) const {
        return data + (count == 1 ? 0 : feature) * rows * cols;
    }
    std::size_t offset(std::size_t feature) const { return (count == 1 ? 0 : feature) * rows * cols; }
};

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Names and offsets of every trainable tensor inside one flat parameter vector.
class ParamLayout {
public:
    std::size_t add(std::string name, std::size_t size) {
        const std::size_t offset = total_;
        blocks_.push_back({std::move(name), offset, size});
        total_ += size;
        return offset;
    }

    std::size_t total() const { return total_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }

    /// Block name and in-block index for a flat coordinate.
    std::string describe(std::size_t index) const {
        for (const auto& b : blocks_)
            if (index >= b.offset && index < b.offset + b.size)
                return b.name + "[" + std::to_string(index - b.offset) + "]";
        return "?[" + std::to_string(index) + "]";
    }

private:
    std::vector<ParamBlock> blocks_;
    std::size_t total_ = 0;
};

}  // namespace pointnorm

#endif  // POINTNORM_PARAMS_HPP
