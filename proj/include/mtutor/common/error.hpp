#pragma once

#include <stdexcept>
#include <string>

namespace mtutor {

/// Root of every error type thrown by the platform libraries.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was not met by the caller.
class PreconditionError : public Error
{
public:
    using Error::Error;
};

} // namespace mtutor
