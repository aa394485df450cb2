#pragma once

#include <stdexcept>
#include <string>

namespace nemo {

// Everything the library throws derives from Error, so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

class RankDeficiency : public Error {
public:
    using Error::Error;
};

// Raised when a Cholesky pivot is non-positive.
class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class InvalidSystem : public Error {
public:
    using Error::Error;
};

class InvalidDirection : public Error {
public:
    using Error::Error;
};

class LineSearchFailure : public Error {
public:
    using Error::Error;
};

class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, double last_residual)
        : Error(what), last_residual_(last_residual) {}
    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

} // namespace nemo
