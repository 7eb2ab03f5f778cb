#pragma once

#include <stdexcept>
#include <string>

namespace mgcn {

// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible operand shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced by a computation; usually means training diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

// Bad user input: config values, files, manifests, flags.
class ValidationError : public Error {
public:
    using Error::Error;
};

} // namespace mgcn
