#ifndef POINTNORM_ERROR_HPP
#define POINTNORM_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pointnorm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t row, std::size_t col, const std::string& cell)
        : Error("parse error at row " + std::to_string(row) + ", column " + std::to_string(col) +
                ": '" + cell + "'"),
          row_(row),
          col_(col) {}
    std::size_t row() const { return row_; }
    std::size_t col() const { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class TooShort : public Error {
public:
    using Error::Error;
};

class DegenerateFeature : public Error {
public:
    explicit DegenerateFeature(std::size_t feature)
        : Error("feature " + std::to_string(feature) + " has zero standard deviation on the train split"),
          feature_(feature) {}
    std::size_t feature() const { return feature_; }

private:
    std::size_t feature_;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class DivisionByZero : public Error {
public:
    using Error::Error;
};

class NonFiniteActivation : public Error {
public:
    using Error::Error;
};

class SingularRegression : public Error {
public:
    using Error::Error;
};

class UnknownMethod : public Error {
public:
    using Error::Error;
};

class EmptySet : public Error {
public:
    using Error::Error;
};

class IOError : public Error {
public:
    using Error::Error;
};

/// Configuration problem; `field()` is the dotted key path that failed validation.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

}  // namespace pointnorm

#endif  // POINTNORM_ERROR_HPP
