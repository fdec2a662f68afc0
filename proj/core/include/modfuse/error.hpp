#pragma once

#include <stdexcept>
#include <string>

namespace modfuse {

// Error taxonomy mirrored by the CLI exit codes: usage/config -> 2,
// data/io -> 3, numeric divergence -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller misuse of a library contract (bad shapes, wrong tape, bad flag).
struct UsageError : Error {
    using Error::Error;
};

// Shape or dimension mismatch between tensors.
struct DimError : UsageError {
    using UsageError::UsageError;
};

// Invalid configuration value or malformed config file.
struct ConfigError : UsageError {
    using UsageError::UsageError;
};

// Malformed or inconsistent dataset content.
struct DataError : Error {
    using Error::Error;
};

// Filesystem-level failure; message carries the path.
struct IoError : Error {
    using Error::Error;
};

// Training produced non-finite values.
struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace modfuse
