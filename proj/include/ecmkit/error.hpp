#pragma once

#include <stdexcept>
#include <string>

namespace ecmkit {

enum class ErrorKind {
  schema,         // document shape: missing field, wrong type, unknown key
  invariant,      // well-formed value that breaks a model rule
  not_found,      // lookup miss
  precondition,   // caller passed arguments outside the operation's domain
  capability,     // executor lacks a required platform feature
  unit_mismatch,  // incompatible measurement units
  runtime,        // anything else that went wrong while running a probe
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error schema_error(const std::string& what) { return {ErrorKind::schema, "schema: " + what}; }

inline Error invariant_error(const std::string& field, const std::string& rule) {
  return {ErrorKind::invariant, "invariant violated for " + field + ": " + rule};
}

inline Error precondition_error(const std::string& what) {
  return {ErrorKind::precondition, "precondition: " + what};
}

inline Error capability_error(const std::string& what) {
  return {ErrorKind::capability, "capability missing: " + what};
}

// CLI exit status for an error. 2 validation, 3 capability; tolerance failures
// (exit 4) are not errors and are handled by the caller.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema:
    case ErrorKind::invariant:
    case ErrorKind::not_found:
    case ErrorKind::precondition:
    case ErrorKind::unit_mismatch:
      return 2;
    case ErrorKind::capability:
      return 3;
    case ErrorKind::runtime:
      return 1;
  }
  return 1;
}

}  // namespace ecmkit
