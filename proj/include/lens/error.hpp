#pragma once

#include <stdexcept>
#include <string>

namespace lens {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched vector/matrix dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Bad user input: malformed config, dataset, or unknown ids.
class InputError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced during training or inference.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace lens
