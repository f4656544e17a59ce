#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace popsize {

// Base of every structured error raised by the library. The CLI maps any
// Error to a nonzero exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

// A numeric input is outside the domain of a formula (nonpositive
// probability, non-normalizable table, ...).
class DomainError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "domain"; }
};

// Invalid configuration: bad fold count, unsupported learner/schema combo,
// infeasible simulation target, unknown column names.
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

// Bad input data. Row numbers are 1-based data rows (the header is row 0).
class DataError : public Error {
 public:
  DataError(const std::string& what, std::optional<std::size_t> row = std::nullopt,
            std::optional<std::string> column = std::nullopt)
      : Error(decorate(what, row, column)), row_(row), column_(std::move(column)) {}

  const char* category() const noexcept override { return "data"; }
  std::optional<std::size_t> row() const { return row_; }
  const std::optional<std::string>& column() const { return column_; }

 private:
  static std::string decorate(const std::string& what, std::optional<std::size_t> row,
                              const std::optional<std::string>& column) {
    std::string out = what;
    if (row) out += " (row " + std::to_string(*row);
    if (column) out += std::string(row ? ", " : " (") + "column '" + *column + "'";
    if (row || column) out += ")";
    return out;
  }

  std::optional<std::size_t> row_;
  std::optional<std::string> column_;
};

}  // namespace popsize
