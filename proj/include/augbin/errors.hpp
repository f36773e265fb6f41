#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace augbin {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NotPositiveSemiDefinite : public Error {
 public:
  using Error::Error;
};

/// The integration region carries (numerically) zero probability.
class DegenerateRegion : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : Error("line " + std::to_string(row) + ", column " + std::to_string(column) + ": " + what),
        row_(row),
        column_(column) {}

  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class SingularDesign : public Error {
 public:
  using Error::Error;
};

class EmptyRiskSet : public Error {
 public:
  using Error::Error;
};

class TooManyFailures : public Error {
 public:
  using Error::Error;
};

}  // namespace augbin
