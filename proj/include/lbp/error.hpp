#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lbp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  // Stable machine-readable category, emitted in reports.
  virtual const char* kind() const noexcept { return "error"; }
};

struct Violation {
  std::string path;     // JSON pointer into the spec document
  std::string message;
};

class InvalidSpecError : public Error {
 public:
  explicit InvalidSpecError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }
  const char* kind() const noexcept override { return "invalid_spec"; }

 private:
  std::vector<Violation> violations_;
};

class UnsupportedSpecError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "unsupported_spec"; }
};

class UndefinedEstimandError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "undefined_estimand"; }
};

class PolicyError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "policy"; }
};

class PositivityError : public Error {
 public:
  PositivityError(const std::string& what, std::vector<std::string> strata)
      : Error(what), strata_(std::move(strata)) {}
  const std::vector<std::string>& strata() const { return strata_; }
  const char* kind() const noexcept override { return "positivity"; }

 private:
  std::vector<std::string> strata_;
};

class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace lbp
