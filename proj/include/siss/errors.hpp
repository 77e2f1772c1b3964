#pragma once

#include <stdexcept>
#include <string>

namespace siss {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape, key or topology mismatch between collaborating objects.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// NaN/inf or divergence in a numeric routine.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid user configuration (negative widths, lo > hi, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A request that would exceed a configured resource cap.
class ResourceError : public Error {
public:
    using Error::Error;
};

/// Training data that cannot be used (non-finite targets).
class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace siss
