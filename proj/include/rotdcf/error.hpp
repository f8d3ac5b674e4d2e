// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rotdcf {

enum class ErrorKind {
  Domain,        // argument outside a supported range
  Shape,         // tensor or basis dimensions disagree
  Basis,         // invalid basis truncation
  Format,        // malformed file contents
  Io,            // file could not be opened / read / written
  Config,        // bad configuration or arch text
  Divergence,    // non-finite loss during training
  Verification,  // a requested check could not be evaluated
};

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Basis: return "basis";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::Config: return "config";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Verification: return "verification";
  }
  return "unknown";
}

}  // namespace rotdcf
