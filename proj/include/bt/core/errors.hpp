#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bt {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown registry key (dataset, architecture, template id).
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Argument or object violates a documented precondition/invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent pipeline/sweep configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file; carries the 1-based line number of the offending line.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// Stored content hash does not match the bytes on disk.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A class has fewer samples than requested.
class InsufficientDataError : public Error {
 public:
  InsufficientDataError(std::string class_name, std::size_t available, std::size_t requested)
      : Error("class '" + class_name + "' has " + std::to_string(available) +
              " records, fewer than the requested " + std::to_string(requested)),
        class_name_(std::move(class_name)) {}

  const std::string& class_name() const noexcept { return class_name_; }

 private:
  std::string class_name_;
};

/// Failure talking to an image-generation backend.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// I/O failure (unwritable path, disk full, ...).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bt
