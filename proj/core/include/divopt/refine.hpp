#pragma once

#include <iosfwd>
#include <vector>

#include "divopt/threshold.hpp"

namespace divopt {

/// Nested dyadic refinement study: level k uses 2^k + 1 equally spaced
/// points per axis on the box, so every level's grid contains the previous
/// one's.
struct RefinementPlan {
  IntervalBox box;
  int levels = 4;
  std::vector<double> probe_x;
  std::vector<double> probe_a;
  std::vector<double> probe_c;

  static RefinementPlan defaults(const IntervalBox& box, int levels = 4);
  void validate() const;
  ActionGrid grid_for_level(int level) const;
};

struct LevelResult {
  int level = 0;
  int m = 0, n = 0;
  double sup_gap = 0.0;    ///< sup |V_k - V_{k-1}| over probes (0 at level 0)
  double max_value = 0.0;
  std::vector<double> values;  ///< probe lattice, x-major then a then c
};

struct RefinementReport {
  std::vector<LevelResult> levels;
  bool monotone = false;            ///< V_k <= V_{k+1} + 1e-9 at every probe
  double worst_monotone_violation = 0.0;
  bool gaps_nonincreasing = false;
  bool levels_verified = false;     ///< every level passed the viscosity scan
};

RefinementReport run_refinement(const ModelParams& p, const RefinementPlan& plan,
                                bool verify_levels = true);

struct LipschitzReport {
  std::vector<double> lx, la, lc;  ///< per-level max difference quotients
  double worst_c_quotient = 0.0;   ///< should stay <= 0 (values antitone in c)
  bool stable = false;             ///< constants do not grow across levels (5%)
};

LipschitzReport lipschitz_probe(const RefinementReport& report, const RefinementPlan& plan);

/// Columns: level,m,n,sup_gap,max_value.
void write_gaps_csv(std::ostream& os, const RefinementReport& report);

}  // namespace divopt
