#pragma once

#include <stdexcept>
#include <string>

namespace fmradio {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (files, dimensions, argument ranges).
class InputError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// An error tagged with the pipeline stage it came from ("ingest", "fa", ...).
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace fmradio
