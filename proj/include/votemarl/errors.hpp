#pragma once

#include <stdexcept>
#include <string>

namespace votemarl {

/// Input rejected before any computation started (bad file, bad flag, bad shape).
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A runtime invariant of the learner or a statistical property check failed.
class InvariantError : public std::runtime_error {
public:
    explicit InvariantError(const std::string& what) : std::runtime_error(what) {}
};

/// The exact solver could not produce a trustworthy answer.
class OracleError : public std::runtime_error {
public:
    explicit OracleError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace votemarl
