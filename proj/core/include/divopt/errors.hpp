#pragma once

#include <stdexcept>
#include <string>

namespace divopt {

/// Thrown when a root-based code path is hit with retention a = 0 (the
/// characteristic quadratic collapses to first order).
struct degenerate_diffusion_error : std::domain_error {
  using std::domain_error::domain_error;
};

/// Thrown when a construction's standing hypothesis fails (e.g. the
/// c_max > q*sigma^2*a_lo^2 / (2*(mu*a_lo - b)) condition for x_c).
struct hypothesis_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown by the simulation executor when a policy emits actions that
/// violate the ratchet constraints (retention up or dividend down).
struct contract_violation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace divopt
