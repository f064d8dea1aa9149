#pragma once

#include <stdexcept>
#include <string>

namespace farfield {

/// Base of every error thrown by the library. Callers that only need a
/// message can catch std::runtime_error.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failure: missing file, unwritable path, short read.
class IoError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied value violates an operation's precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Input was well-formed but the computation cannot produce a result
/// (silent signal, no noise frames, undefined metric, ...).
class ProcessingError : public Error {
public:
    using Error::Error;
};

/// Text or binary input that does not follow its format.
class FormatError : public Error {
public:
    FormatError(const std::string& what, long line = -1)
        : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw PreconditionError(what);
}

}  // namespace farfield
