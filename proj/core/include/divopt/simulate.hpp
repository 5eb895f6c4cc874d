#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>

#include "divopt/threshold.hpp"

namespace divopt {

struct SimConfig {
  double dt = 1e-3;           ///< Euler step
  long n_paths = 10000;
  double horizon_eps = 1e-8;  ///< tail-truncation tolerance; T_max = -ln(eps)/q
  std::uint64_t seed = 20240614;
  bool antithetic = false;    ///< pair paths 2k/2k+1 on mirrored normals
  long log_paths = 0;         ///< event-log the first N paths (debugging)

  void validate() const;
};

struct SimEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long n_paths = 0;
  double ruin_fraction = 0.0;
  double t_max = 0.0;
  double tail_bound = 0.0;          ///< truncation part of the bias bound
  bool stderr_degenerate = false;   ///< too few samples for a spread estimate
};

/// One step's control: hold (retention, dividend) while the reserve stays
/// below `valid_below`. Controllers are per-path state machines; they are
/// re-queried whenever the reserve reaches `valid_below`.
struct ControlSegment {
  double retention;
  double dividend;
  double valid_below;
};

using PathController = std::function<ControlSegment(double x)>;

/// A strategy is a controller factory plus the largest dividend rate it can
/// ever pay (used for the truncation bias bound).
struct Strategy {
  std::function<PathController(double x0, double a0, double c0)> start;
  double c_bar = 0.0;
};

/// Hold (a, c) forever.
Strategy constant_strategy(double a, double c);

/// The threshold strategy induced by a solved grid: hold the current cell
/// until the reserve crosses its y/z thresholds, chaining instant switches.
/// `sol` must outlive the strategy.
Strategy threshold_strategy(const ThresholdSolution& sol);

/// Euler-Maruyama estimate of the expected discounted dividends under the
/// strategy, starting from reserve x0 at action state (a0, c0). Ruin is
/// detected at step granularity; dividends accrue with exact per-step
/// discounting. The executor enforces the ratchet constraints on every
/// controller response and throws contract_violation if they fail.
/// Deterministic for a fixed (config, seed) regardless of scheduling.
/// When event_log is given, the first cfg.log_paths paths write rows
/// (t,x,a,c,event) on start, action switches, ruin and horizon.
SimEstimate simulate_strategy(const ModelParams& p, const Strategy& strategy, double x0,
                              double a0, double c0, const SimConfig& cfg,
                              std::ostream* event_log = nullptr);

}  // namespace divopt
