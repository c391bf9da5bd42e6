#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A text input file did not conform to its line format.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A binary file has the wrong magic string or is structurally invalid.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A binary file was written by an unsupported format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A binary file ended before its declared payload.
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Stored checksum does not match the payload.
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace dpr
