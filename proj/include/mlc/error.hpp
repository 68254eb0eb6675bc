#pragma once

#include <stdexcept>
#include <string>

namespace mlc {

enum class ErrorKind {
    invalid_input,   // malformed data, schema mismatch, bad argument
    missing_file,
    numeric,         // rank deficiency, bracket failure, degenerate denominators
    infeasible
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Error raised while reading a table; row is 1-based and counts the header as row 1.
class TableError : public Error {
public:
    TableError(const std::string& what, std::size_t row, std::string column)
        : Error(ErrorKind::invalid_input,
                what + " (row " + std::to_string(row) + (column.empty() ? "" : ", column '" + column + "'") + ")"),
          row_(row), column_(std::move(column)) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(ErrorKind::invalid_input, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrorKind::numeric, msg); }

} // namespace mlc
