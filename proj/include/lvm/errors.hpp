#pragma once

#include <stdexcept>
#include <string>

namespace lvm {

// Error categories map onto CLI exit codes: usage -> 1, data/format -> 2,
// numerical/training -> 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const { return 2; }
};

class UsageError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 1; }
};

class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 3; }
};

class DimensionError : public DataError {
public:
    using DataError::DataError;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class ParseError : public DataError {
public:
    using DataError::DataError;
};

class IoError : public DataError {
public:
    using DataError::DataError;
};

class CorruptShardError : public DataError {
public:
    using DataError::DataError;
};

class CorruptCheckpointError : public DataError {
public:
    using DataError::DataError;
};

class InvalidTokenError : public DataError {
public:
    using DataError::DataError;
};

class LengthError : public DataError {
public:
    using DataError::DataError;
};

class InsufficientFramesError : public DataError {
public:
    using DataError::DataError;
};

class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

// Bad preset names, malformed or unknown config keys.
class ConfigError : public UsageError {
public:
    using UsageError::UsageError;
};

class TrainingError : public NumericError {
public:
    using NumericError::NumericError;
};

} // namespace lvm
