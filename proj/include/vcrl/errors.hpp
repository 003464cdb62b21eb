#pragma once

#include <stdexcept>
#include <string>

namespace vcrl {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or corpus specification.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Reward group too small or otherwise malformed.
class InvalidGroupError : public Error {
 public:
  using Error::Error;
};

// Operation requires binary rewards.
class UnsupportedRewardError : public Error {
 public:
  using Error::Error;
};

// Token sequence that the policy cannot have emitted.
class InvalidRolloutError : public Error {
 public:
  using Error::Error;
};

class EmptyBatchError : public Error {
 public:
  using Error::Error;
};

// Every group failed the 0 < k < G constraint; the caller should resample.
class EmptyAfterFilterError : public Error {
 public:
  using Error::Error;
};

// File-system failure; the message always carries the offending path.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace vcrl
