#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "divopt/model.hpp"

namespace divopt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Tie-break between cutting retention and raising dividends when both
/// moves are equally good (Cases 4 and 7 of the threshold selection).
enum class Priority { RetentionFirst, DividendFirst };

const char* to_string(Priority p);
Priority priority_from_string(const std::string& s);

struct SolverConfig {
  double x_max = 0.0;          ///< search-domain truncation for the 1-D maximizations
  int coarse_points = 2048;    ///< uniform scan size before golden-section refinement
  double refine_tol = 1e-6;    ///< abscissa tolerance of the refinement
  double delta_tol = 0.0;      ///< zero-max fallback tolerance (gap level)
  double inf_threshold_M = 0.0;///< finite stand-in for +inf thresholds in step-function exports
  Priority priority = Priority::DividendFirst;

  /// Scale-aware defaults: x_max covers every cell's slow exponential,
  /// delta_tol = 1e-12 * c_max/q.
  static SolverConfig defaults(const ModelParams& p, const ActionGrid& grid);
  void validate() const;
};

/// Optimal threshold strategy on a finite action grid, produced by
/// solve_backward. Matrices are row-major m x n over (retention index i,
/// dividend index j); +inf entries mean "never switch in this direction".
/// y = retention-cut threshold, z = dividend-raise threshold,
/// k = coefficient of the e^{theta1 x} - e^{theta2 x} homogeneous term.
struct ThresholdSolution {
  ModelParams params;
  ActionGrid grid;
  SolverConfig config;
  Priority priority = Priority::DividendFirst;

  std::vector<double> y_star;
  std::vector<double> z_star;
  std::vector<double> k_star;
  std::vector<ThetaPair> thetas;

  /// Cells whose selected switch direction fails to dominate the other
  /// target pointwise. The greedy coefficient comparison behind Cases 1-7
  /// assumes the two continuation values never cross; on parameter draws
  /// where they do, no single-switch cell strategy dominates both targets
  /// and the cell is flagged here instead of silently mispriced.
  std::vector<std::pair<int, int>> inconsistent_cells;
  bool case_consistent() const { return inconsistent_cells.empty(); }

  int m() const { return grid.m(); }
  int n() const { return grid.n(); }
  int idx(int i, int j) const { return i * grid.n() + j; }

  double y(int i, int j) const { return y_star[idx(i, j)]; }
  double z(int i, int j) const { return z_star[idx(i, j)]; }
  double k(int i, int j) const { return k_star[idx(i, j)]; }
  const ThetaPair& theta(int i, int j) const { return thetas[idx(i, j)]; }

  /// Cell whose closed-form piece represents W(., i, j) at reserve x after
  /// following the delegation chain.
  std::pair<int, int> owning_cell(double x, int i, int j) const;

  double value(double x, int i, int j) const;
  double slope(double x, int i, int j) const;
  double curvature(double x, int i, int j) const;

  /// Value at off-grid actions: a snaps down to the grid, c snaps up.
  double extended_value(double x, double a, double c) const;

  /// All finite thresholds, sorted and deduplicated.
  std::vector<double> finite_thresholds() const;

  void check_indices(int i, int j) const;
};

enum class GKind { A, C, E };

/// Continuation data for a G-function: the already-solved target cell's
/// value curve and its slope at 0 (used by the x = 0 limit).
struct Continuation {
  std::function<double(double)> value;
  double slope_at_0 = 0.0;
};

/// The switch-gain ratio G for direction `kind` at cell (i, j); the x = 0
/// value is the derivative-based limit.
double g_function(const ModelParams& p, const ActionGrid& grid, GKind kind, int i, int j,
                  double x, const Continuation& cont);

struct MaximizeResult {
  double max_value;
  double arg;  ///< smallest maximizer found
};

/// Coarse uniform scan on [0, x_max] followed by left-biased golden-section
/// refinement around the first near-maximal abscissa. Ties at the level of
/// refine_tol*(1+|max|) resolve to the smallest x.
MaximizeResult maximize_scalar(const std::function<double(double)>& f, double x_max,
                               int coarse_points, double refine_tol);

/// Zero-max fallback: smallest x beyond which gap(x) stays below delta_tol
/// (gap = singleton curve minus continuation). Returns 0 if the gap is ever
/// materially negative or never reaches delta_tol.
double fallback_threshold(const std::function<double(double)>& gap, double delta_tol,
                          double x_max, int scan_points);

struct CasePick {
  double y;
  double z;
};

/// Threshold selection from the three direction maxima and their smallest
/// maximizers. Equalities are tested with relative tolerance 1e-9*(1+scale);
/// `priority` breaks the retention-vs-dividend ties.
CasePick select_case(double maxA, double maxC, double maxE, double gA, double gC, double gE,
                     Priority priority);

/// Backward recursion over the grid: cells (m-1, .) and (., n-1) seed from
/// singleton values, every other cell maximizes its G-functions.
ThresholdSolution solve_backward(const ModelParams& p, const ActionGrid& grid,
                                 const SolverConfig& cfg);

/// Step-function boundaries induced by the threshold matrices, with +inf
/// replaced by the finite stand-in M.
double step_zeta_A(const ThresholdSolution& sol, double M, double a, double c);
double step_zeta_C(const ThresholdSolution& sol, double M, double a, double c);

/// CSV export/import (columns i,j,a_i,c_j,y_star,z_star,k_star; "inf" for +inf).
void write_thresholds_csv(std::ostream& os, const ThresholdSolution& sol);
ThresholdSolution read_thresholds_csv(std::istream& is, const ModelParams& p,
                                      const ActionGrid& grid, const SolverConfig& cfg);

}  // namespace divopt
