#pragma once

#include <stdexcept>
#include <string>

namespace sotbt {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
  using Error::Error;
};

class InvalidBoundKind : public Error {
public:
  using Error::Error;
};

class NonFiniteEvaluation : public Error {
public:
  using Error::Error;
};

class UnknownKind : public Error {
public:
  using Error::Error;
};

class ValidationError : public Error {
public:
  using Error::Error;
};

class ScenarioError : public Error {
public:
  using Error::Error;
};

class UnsetBlackboardKey : public Error {
public:
  explicit UnsetBlackboardKey(const std::string& key)
      : Error("blackboard key '" + key + "' is not set"), key_(key) {}
  const std::string& key() const { return key_; }

private:
  std::string key_;
};

/// Inner QP exceeded its active-set change budget.
class NumericalFailure : public Error {
public:
  NumericalFailure(int level, int iterations, const std::string& what)
      : Error(what), level_(level), iterations_(iterations) {}
  int level() const { return level_; }
  int iterations() const { return iterations_; }

private:
  int level_;
  int iterations_;
};

/// Malformed document; line and column are 1-based, 0 when unknown.
class ParseError : public Error {
public:
  ParseError(const std::string& msg, int line, int column)
      : Error(format(msg, line, column)), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

private:
  static std::string format(const std::string& msg, int line, int column) {
    if (line <= 0) return msg;
    return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg;
  }
  int line_;
  int column_;
};

}  // namespace sotbt
