#pragma once

#include <stdexcept>
#include <string>

namespace lmm {

// Base class for every error raised by the library. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Vector/matrix sizes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid configuration value (non-positive temperature, H1 < C, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Non-finite inputs or a diverging loss.
class NumericError : public Error {
public:
    using Error::Error;
};

// Dataset content violates its invariants (empty class, label out of range).
class DataError : public Error {
public:
    using Error::Error;
};

// Malformed file: bad magic, truncated archive, wrong dtype or shape.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

// Temperature target cannot be reached on the given logits.
class CalibrationError : public NumericError {
public:
    using NumericError::NumericError;
};

// Operation is defined only for a narrower configuration (e.g. C != 2).
class UnsupportedError : public Error {
public:
    using Error::Error;
};

}  // namespace lmm
