#pragma once

#include <stdexcept>
#include <string>

namespace letet {

/// Malformed or inconsistent input data (files, sizes, indices).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parse failure with the offending line number (1-based) of the source text.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Numerical breakdown: degenerate geometry, non-finite values, solver failure.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace letet
