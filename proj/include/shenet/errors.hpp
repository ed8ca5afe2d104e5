#pragma once

#include <stdexcept>
#include <string>

namespace shenet {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad parameter combination, unknown config key,
/// cluster count larger than the data set, and similar.
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed input text (names the offending line where possible).
struct ParseError : Error {
    using Error::Error;
};

/// Structurally valid input that violates a data contract
/// (non-monotone frames, shape mismatches, invalid coordinates).
struct DataError : Error {
    using Error::Error;
};

/// Serialized file does not match the expected format or version.
struct FormatError : Error {
    using Error::Error;
};

/// Numeric failure: non-finite values, undefined similarity, bad gradients.
struct NumericError : Error {
    using Error::Error;
};

/// Cosine similarity is undefined (zero-norm operand).
struct SimilarityError : NumericError {
    using NumericError::NumericError;
};

/// Autograd graph misuse: non-scalar or detached loss.
struct GraphError : NumericError {
    using NumericError::NumericError;
};

/// Operation not allowed in the current state (e.g. mutating a frozen bank).
struct StateError : Error {
    using Error::Error;
};

}  // namespace shenet
