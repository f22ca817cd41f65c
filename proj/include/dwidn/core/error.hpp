#pragma once

#include <stdexcept>
#include <string>

namespace dwidn {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value left the finite range (NaN/Inf) or a numeric precondition failed.
class NumericError : public Error {
public:
    using Error::Error;
};

/// File-level failures: missing, truncated, corrupted, wrong dtype.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace dwidn
