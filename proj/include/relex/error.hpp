#pragma once

#include <stdexcept>
#include <string>

namespace relex {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed graph input (bad endpoints, ragged features, self-loops).
class GraphError : public Error {
public:
    using Error::Error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A loss or gradient became NaN/Inf during optimization.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// The requested operation needs gradients the black box does not expose.
class UnsupportedModelError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace relex
