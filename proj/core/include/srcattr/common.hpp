#pragma once

#include <stdexcept>
#include <string>

namespace srcattr {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data (bad CSV row, bad JSON, unparseable value).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Vector/matrix dimension does not match what the operation expects.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Not enough items to satisfy a request (split counts, mixture fitting).
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Statistical model failure: non-SPD covariance, degenerate mixture fit.
class ModelError : public Error {
public:
    using Error::Error;
};

/// Optimization produced NaN/Inf; carries the epoch where it happened.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch)
        : Error(what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_ = -1;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A metric was requested on a population where it is undefined.
class MetricError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure with path context in the message.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace srcattr
