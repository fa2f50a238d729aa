#pragma once

#include <stdexcept>
#include <string>

namespace mxt {

// Shape or axis mismatch.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Caller violated a precondition (non-scalar backward root, delta <= 0, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// NaN/Inf encountered where finite values are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorruptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace mxt
