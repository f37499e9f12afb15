#ifndef GAZELT_ERROR_HPP
#define GAZELT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace gazelt {

/// Base of every error raised by the library. Each subclass maps to one
/// failure category so callers (and the CLI) can report a named diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };
class DegenerateInputError : public Error { public: using Error::Error; };
class MetricError : public Error { public: using Error::Error; };

/// Binary format violation; the message carries the byte offset.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace gazelt

#endif  // GAZELT_ERROR_HPP
