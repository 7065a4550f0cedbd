#pragma once

#include <stdexcept>
#include <string>

namespace quic {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Bad values in the data itself: NaN features, out-of-range labels.
class DataError : public Error {
public:
    using Error::Error;
};

// API misuse, e.g. backward() on a non-scalar or BN train mode with B = 1.
class UsageError : public Error {
public:
    using Error::Error;
};

// Invalid or mutually incompatible configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed files: bad magic, truncated payload, length mismatch.
class FormatError : public Error {
public:
    using Error::Error;
};

// Refusal to allocate beyond a configured cap.
class ResourceError : public Error {
public:
    using Error::Error;
};

// Loss or gradient became non-finite during training.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace quic
