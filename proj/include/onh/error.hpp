#pragma once

#include <stdexcept>
#include <string>

namespace onh {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data violates a documented contract (bad shapes, invalid labels,
// non-finite values, malformed files).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// File system failures. The message always carries the offending path.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace onh
