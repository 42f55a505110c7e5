#pragma once

#include <stdexcept>
#include <string>

namespace prefroute {

// Exit codes used by the CLI; library errors carry the code they map to.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int validation = 2;
inline constexpr int io = 3;
inline constexpr int numeric = 4;
inline constexpr int external_service = 5;
}  // namespace exit_code

class Error : public std::runtime_error {
 public:
  Error(std::string message, int code)
      : std::runtime_error(std::move(message)), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::string message)
      : Error(std::move(message), exit_code::validation) {}
};

class ParseError : public ValidationError {
 public:
  ParseError(std::string message, std::size_t line)
      : ValidationError("line " + std::to_string(line) + ": " + std::move(message)),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  explicit IoError(std::string message) : Error(std::move(message), exit_code::io) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(std::string message)
      : Error(std::move(message), exit_code::numeric) {}
};

class ExternalServiceError : public Error {
 public:
  explicit ExternalServiceError(std::string message)
      : Error(std::move(message), exit_code::external_service) {}
};

}  // namespace prefroute
