#pragma once

#include <iosfwd>
#include <vector>

#include "divopt/threshold.hpp"

namespace divopt {

struct HjbConfig {
  int points = 2000;              ///< sample count (uniform base + clusters)
  double x_hi = 0.0;              ///< scan upper end; 0 = auto from thresholds
  double tol_pos_rel = 1e-6;      ///< positive-residual tolerance, times c_max/q
  double tol_active_rel = 1e-6;   ///< complementarity tolerance, times c_max/q
  double kink_exclusion = 1e-7;   ///< skip abscissae this close to a threshold
  double pasting_eps = 1e-6;      ///< one-sided offset for jump/pasting probes
};

struct ResidualRow {
  double x;
  int i, j;
  double branch_A;  ///< W(x,i+1,j) - W(x,i,j); -inf when i = m-1
  double branch_C;  ///< W(x,i,j+1) - W(x,i,j); -inf when j = n-1
  double branch_L;  ///< L^{a_i,c_j}(W)(x), analytic derivatives
  double max3;
};

struct ResidualReport {
  std::vector<double> grid_points;
  std::vector<ResidualRow> rows;
  std::vector<double> skipped;  ///< abscissae too close to a kink
  double max_violation = 0.0;   ///< worst positive excess of max3 over 0
  double worst_x = 0.0;
  int worst_i = 0, worst_j = 0;
};

ResidualReport hjb_residuals(const ThresholdSolution& sol, const std::vector<double>& xs,
                             double kink_exclusion = 1e-7);

struct ScanReport {
  bool pass = false;
  double tol_pos = 0.0;
  double tol_active = 0.0;
  double max_positive_residual = 0.0;   ///< over all cells and samples
  double worst_complementarity = 0.0;   ///< most negative max3 (should be ~0)
  double worst_jump = 0.0;              ///< max threshold discontinuity
  double worst_jump_tol = 0.0;
  bool jumps_ok = true;
  double worst_x = 0.0;
  int worst_i = 0, worst_j = 0;
  int samples = 0;
};

/// Samples the quasi-variational system max{L, obstacle_A, obstacle_C} = 0:
/// the max of the three branches must stay within [-tol_active, tol_pos]
/// everywhere, and W must be continuous across every finite threshold.
ScanReport viscosity_scan(const ThresholdSolution& sol, const HjbConfig& cfg = {});

struct BoundaryReport {
  bool zero_ok = true;
  double worst_zero = 0.0;
  bool tail_ok = true;
  double x_big = 0.0;
  double worst_tail_gap = 0.0;
  double tail_bound = 0.0;
  bool slope_ok = true;
  double worst_slope_excess = 0.0;  ///< slope above the cell's slope at 0+
  double lipschitz_hat = 0.0;       ///< max observed slope
  bool pass() const { return zero_ok && tail_ok && slope_ok; }
};

/// W(0) = 0 exactly, the x -> infinity asymptote, and the per-piece slope
/// probe (no slope exceeds the cell's slope at 0+).
BoundaryReport boundary_checks(const ThresholdSolution& sol);

/// Log-dense near 0 and near every finite threshold, uniform elsewhere.
std::vector<double> default_sample_points(const ThresholdSolution& sol, int points,
                                          double x_hi = 0.0);

/// Columns: x,i,j,branchA,branchC,branchL,max.
void write_residuals_csv(std::ostream& os, const ResidualReport& report);

}  // namespace divopt
