#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lestab {

enum class ErrorKind {
  domain,
  unsupported_index,
  solver_failure,
  insufficient_resolution,
  same_mass_violation,
  invalid_density,
  invalid_perturbation,
  mesh_tangling,
  step_failure,
  blow_up,
  cannot_fit,
  config,
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::unsupported_index: return "unsupported-index";
    case ErrorKind::solver_failure: return "solver-failure";
    case ErrorKind::insufficient_resolution: return "insufficient-resolution";
    case ErrorKind::same_mass_violation: return "same-mass-violation";
    case ErrorKind::invalid_density: return "invalid-density";
    case ErrorKind::invalid_perturbation: return "invalid-perturbation";
    case ErrorKind::mesh_tangling: return "mesh-tangling";
    case ErrorKind::step_failure: return "step-failure";
    case ErrorKind::blow_up: return "blow-up";
    case ErrorKind::cannot_fit: return "cannot-fit";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so that callers
/// (notably the CLI) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lestab
