#pragma once

#include <stdexcept>
#include <string>

namespace pirtune {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or rank disagreement between tensors/specs.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Bad configuration: unknown keys, invalid values, hash mismatch on resume.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Checkpoint / file problems: bad magic, truncation, unwritable paths.
class IoError : public Error {
public:
    using Error::Error;
};

// A pipeline stage was invoked before its prerequisites exist.
class MissingArtifactError : public Error {
public:
    using Error::Error;
};

// Training diverged (NaN loss) or another numeric precondition failed.
class NumericError : public Error {
public:
    using Error::Error;
};

// Degenerate statistical input (zero variance where nonzero is required).
class StatsError : public Error {
public:
    using Error::Error;
};

}  // namespace pirtune
