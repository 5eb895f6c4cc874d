#include "divopt/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace divopt {

namespace {

double lin_op(const ThresholdSolution& sol, double x, int i, int j) {
  // L^{a_i,c_j}(W)(x) with the cell's own coefficients applied to the
  // owning piece's analytic derivatives.
  const double a = sol.grid.retentions[i];
  const double c = sol.grid.dividends[j];
  const ModelParams& p = sol.params;
  const double w = sol.value(x, i, j);
  const double wx = sol.slope(x, i, j);
  const double wxx = sol.curvature(x, i, j);
  return 0.5 * p.sigma * p.sigma * a * a * wxx + (p.mu * a - p.b - c) * wx - p.q * w + c;
}

}  // namespace

ResidualReport hjb_residuals(const ThresholdSolution& sol, const std::vector<double>& xs,
                             double kink_exclusion) {
  ResidualReport rep;
  rep.grid_points = xs;
  const std::vector<double> kinks = sol.finite_thresholds();
  const int m = sol.m(), n = sol.n();

  for (double x : xs) {
    bool near_kink = false;
    for (double t : kinks) {
      if (std::abs(x - t) < kink_exclusion) {
        near_kink = true;
        break;
      }
    }
    if (near_kink || x < 0.0) {
      rep.skipped.push_back(x);
      continue;
    }
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        ResidualRow row;
        row.x = x;
        row.i = i;
        row.j = j;
        const double w = sol.value(x, i, j);
        row.branch_A = (i < m - 1) ? sol.value(x, i + 1, j) - w : -kInf;
        row.branch_C = (j < n - 1) ? sol.value(x, i, j + 1) - w : -kInf;
        row.branch_L = lin_op(sol, x, i, j);
        row.max3 = std::max({row.branch_A, row.branch_C, row.branch_L});
        if (row.max3 > rep.max_violation) {
          rep.max_violation = row.max3;
          rep.worst_x = x;
          rep.worst_i = i;
          rep.worst_j = j;
        }
        rep.rows.push_back(row);
      }
    }
  }
  return rep;
}

std::vector<double> default_sample_points(const ThresholdSolution& sol, int points,
                                          double x_hi) {
  const std::vector<double> kinks = sol.finite_thresholds();
  double hi = x_hi;
  if (hi <= 0.0) {
    hi = 10.0;
    for (double t : kinks) hi = std::max(hi, 1.25 * t);
    hi = std::min(hi, sol.config.x_max);
  }

  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(points) + 24 * (kinks.size() + 1));
  const int base = std::max(points, 2);
  for (int k = 0; k < base; ++k) xs.push_back(hi * (k + 0.5) / base);
  // geometric cluster near 0
  for (double off = 1e-6; off < hi; off *= 4.0) xs.push_back(off);
  // clusters around each finite threshold
  for (double t : kinks) {
    for (double off = 1e-5; off < 1.0 + 1e-9; off *= 10.0) {
      if (t - off > 0.0) xs.push_back(t - off);
      if (t + off < hi) xs.push_back(t + off);
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

ScanReport viscosity_scan(const ThresholdSolution& sol, const HjbConfig& cfg) {
  ScanReport rep;
  const double scale = sol.grid.c_max() / sol.params.q;
  rep.tol_pos = cfg.tol_pos_rel * scale;
  rep.tol_active = cfg.tol_active_rel * scale;

  const std::vector<double> xs = default_sample_points(sol, cfg.points, cfg.x_hi);
  const ResidualReport res = hjb_residuals(sol, xs, cfg.kink_exclusion);
  rep.samples = static_cast<int>(res.rows.size());

  double worst_neg = 0.0;
  for (const ResidualRow& row : res.rows) {
    if (row.max3 > rep.max_positive_residual) {
      rep.max_positive_residual = row.max3;
      rep.worst_x = row.x;
      rep.worst_i = row.i;
      rep.worst_j = row.j;
    }
    worst_neg = std::min(worst_neg, row.max3);
  }
  rep.worst_complementarity = worst_neg;

  // Continuity guard: a fabricated k or threshold shows up as a jump, which
  // the pointwise branches cannot see (the corrupted piece still solves the
  // same linear ODE).
  double lip = 0.0;
  for (int i = 0; i < sol.m(); ++i)
    for (int j = 0; j < sol.n(); ++j) lip = std::max(lip, std::abs(sol.slope(0.0, i, j)));
  rep.jumps_ok = true;
  for (int i = 0; i < sol.m(); ++i) {
    for (int j = 0; j < sol.n(); ++j) {
      for (double t : {sol.y(i, j), sol.z(i, j)}) {
        if (!std::isfinite(t) || t <= 0.0) continue;
        const double eps = cfg.pasting_eps * (1.0 + t);
        const double wl = sol.value(std::max(t - eps, 0.0), i, j);
        const double wr = sol.value(t + eps, i, j);
        const double jump = std::abs(wr - wl);
        const double local_slope =
            std::max({std::abs(sol.slope(std::max(t - eps, 0.0), i, j)),
                      std::abs(sol.slope(t + eps, i, j)), 1e-3 * lip});
        const double tol = 2.0 * sol.config.delta_tol + 4.0 * local_slope * eps;
        if (jump > rep.worst_jump) {
          rep.worst_jump = jump;
          rep.worst_jump_tol = tol;
        }
        if (jump > tol) rep.jumps_ok = false;
      }
    }
  }

  rep.pass = rep.max_positive_residual <= rep.tol_pos &&
             rep.worst_complementarity >= -rep.tol_active && rep.jumps_ok;
  return rep;
}

BoundaryReport boundary_checks(const ThresholdSolution& sol) {
  BoundaryReport rep;
  const int m = sol.m(), n = sol.n();
  const double cq = sol.grid.c_max() / sol.params.q;

  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double w0 = std::abs(sol.value(0.0, i, j));
      rep.worst_zero = std::max(rep.worst_zero, w0);
    }
  }
  rep.zero_ok = rep.worst_zero == 0.0;

  double t_max = 0.0;
  for (double t : sol.finite_thresholds()) t_max = std::max(t_max, t);
  rep.x_big = 10.0 * (t_max + 1.0);
  const ThetaPair th_term = sol.theta(m - 1, n - 1);
  rep.tail_bound = cq * std::exp(th_term.theta2 * rep.x_big) + 1e-9;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double gap = std::abs(sol.value(rep.x_big, i, j) - cq);
      rep.worst_tail_gap = std::max(rep.worst_tail_gap, gap);
    }
  }
  rep.tail_ok = rep.worst_tail_gap <= rep.tail_bound;

  // Slope probe: within each cell the slope never exceeds the slope at 0+
  // beyond 1e-6 of scale; also records the global Lipschitz estimate.
  const std::vector<double> xs = default_sample_points(sol, 512);
  rep.slope_ok = true;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double s0 = sol.slope(0.0, i, j);
      rep.lipschitz_hat = std::max(rep.lipschitz_hat, s0);
      const double allow = s0 + 1e-6 * (1.0 + std::abs(s0));
      for (double x : xs) {
        const double s = sol.slope(x, i, j);
        rep.lipschitz_hat = std::max(rep.lipschitz_hat, s);
        const double excess = s - allow;
        if (excess > rep.worst_slope_excess) rep.worst_slope_excess = excess;
      }
    }
  }
  rep.slope_ok = rep.worst_slope_excess <= 0.0;
  return rep;
}

void write_residuals_csv(std::ostream& os, const ResidualReport& report) {
  os << "x,i,j,branchA,branchC,branchL,max\n";
  char buf[220];
  for (const ResidualRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%d,%d,%.17g,%.17g,%.17g,%.17g\n", r.x, r.i, r.j,
                  r.branch_A, r.branch_C, r.branch_L, r.max3);
    os << buf;
  }
}

}  // namespace divopt
