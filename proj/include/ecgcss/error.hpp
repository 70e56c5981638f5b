#pragma once

#include <stdexcept>
#include <string>

namespace ecgcss {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated an operation precondition (bad argument, bad config).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Matrix/vector shapes do not conform.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input data cannot be processed (degenerate signal, empty dataset, no beats).
class DataError : public Error {
public:
    using Error::Error;
};

/// Iterative training produced a non-finite loss or failed to converge.
class TrainingError : public Error {
public:
    using Error::Error;
};

enum class ParseErrc {
    MalformedHeader,
    RaggedRow,
    UnknownLead,
    NonPositiveFs,
    NonFiniteSample,
    BadLabel,
    BadNumber,
    TooFewSamples,
    Io,
};

class ParseError : public Error {
public:
    ParseError(ParseErrc code, const std::string& what) : Error(what), code_(code) {}
    ParseErrc code() const noexcept { return code_; }

private:
    ParseErrc code_;
};

} // namespace ecgcss
