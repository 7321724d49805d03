#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace meld {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid construction arguments, mismatched dimensions, bad config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A user evaluator produced NaN or threw; carries the submodel (or component) label.
class EvaluationError : public Error {
 public:
  EvaluationError(std::string source, const std::string& what)
      : Error(source + ": " + what), source_(std::move(source)) {}
  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

class NormalizationError : public Error {
 public:
  using Error::Error;
};

class SamplerError : public Error {
 public:
  using Error::Error;
};

// Stage proposals drawn from too few distinct previous-stage draws.
class DepletionError : public SamplerError {
 public:
  using SamplerError::SamplerError;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

}  // namespace meld
