#pragma once

#include <stdexcept>
#include <string>

namespace saelab {

/// Broad failure category. Maps one-to-one onto CLI exit codes and C API status codes.
enum class ErrorKind {
    InvalidArgument,  // caller passed something that violates a precondition
    Config,           // a run configuration is malformed or names a bad field
    Numerical,        // divergence or other non-finite arithmetic
    Io,               // filesystem failure
    Format,           // a file exists but is not a valid artifact
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(ErrorKind::InvalidArgument, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

class DivergenceError : public NumericalError {
public:
    explicit DivergenceError(long long step)
        : NumericalError("diverged at step " + std::to_string(step)), step_(step) {}
    long long step() const noexcept { return step_; }

private:
    long long step_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

enum class FormatErrc {
    UnrecognizedFormat,
    UnsupportedVersion,
    TruncatedHeader,
    TruncatedPayload,
    TrailingBytes,
    BadHeader,
    BadMetadata,
    NonFinite,
    LabelOutOfRange,
};

class FormatError : public Error {
public:
    FormatError(FormatErrc code, const std::string& what) : Error(ErrorKind::Format, what), code_(code) {}
    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

/// 0 success, 2 config/validation, 3 numerical failure, 4 I/O.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace saelab
