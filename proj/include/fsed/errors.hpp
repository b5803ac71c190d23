#pragma once

#include <stdexcept>
#include <string>

namespace fsed {

/// Base class for every error raised by the toolkit.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A file could not be read (missing, truncated, corrupt).
struct IngestionError : Error {
    using Error::Error;
};

/// A file was readable but its encoding or schema is unsupported.
struct FormatError : Error {
    using Error::Error;
};

/// A text document (CSV, JSON) violated its grammar.
struct ParseError : Error {
    using Error::Error;
};

/// Valid inputs that violate an operation's precondition
/// (missing classes, empty pools, bad annotation counts).
struct DataError : Error {
    using Error::Error;
};

/// Non-finite values reached a place that requires finite arithmetic.
struct NumericalError : Error {
    using Error::Error;
};

}  // namespace fsed
