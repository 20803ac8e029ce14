#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace kcflat {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent dataset content (manifest rows, image files).
class DatasetError : public Error {
public:
    using Error::Error;
};

// Tensor / image dimensions that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Train/test contamination detected when evaluating a model.
class LeakageError : public Error {
public:
    using Error::Error;
};

// Plan parsing or plan lookup failure. Carries the offending step row when known.
class PlanError : public Error {
public:
    explicit PlanError(const std::string& what, std::optional<int> step = std::nullopt)
        : Error(what), step_(step) {}
    std::optional<int> step() const noexcept { return step_; }

private:
    std::optional<int> step_;
};

// A plan step the mock robot refused to perform.
class ExecutionError : public Error {
public:
    ExecutionError(const std::string& what, int step_index) : Error(what), step_index_(step_index) {}
    int step_index() const noexcept { return step_index_; }

private:
    int step_index_;
};

}  // namespace kcflat
