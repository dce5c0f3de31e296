#pragma once

#include <stdexcept>
#include <string>

namespace f3d {

// Error categories map 1:1 onto CLI exit codes (see tools/).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad command line or malformed request shape. Exit code 1.
class UsageError : public Error {
public:
    using Error::Error;
};

// Violated precondition, invariant, or schema. Exit code 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Filesystem and file-format failures. Exit code 3.
class IoError : public Error {
public:
    using Error::Error;
};

// Remote LLM endpoint failures after retries. Exit code 4.
class RemoteError : public Error {
public:
    using Error::Error;
};

}  // namespace f3d
