#pragma once

#include <stdexcept>
#include <string>

namespace mrgrp {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// softmax over a fully masked vector.
class EmptyCandidateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite gradient or loss while training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FeatureError : public Error {
 public:
  using Error::Error;
};

/// Route violates pickup-before-delivery or is not a permutation.
class PrecedenceError : public Error {
 public:
  using Error::Error;
};

class ReferenceError : public Error {
 public:
  using Error::Error;
};

/// Teacher-forced label task has zero probability.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, long long instance_id)
      : Error("instance " + std::to_string(instance_id) + ": " + what),
        instance_id_(instance_id) {}
  long long instance_id() const { return instance_id_; }

 private:
  long long instance_id_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace mrgrp
