#pragma once

#include <stdexcept>
#include <string>

namespace drivemp {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad files, inconsistent lengths, invalid configuration.
class InputError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace drivemp
