#include "divopt/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace divopt {

const char* to_string(Priority p) {
  return p == Priority::RetentionFirst ? "retention-first" : "dividend-first";
}

Priority priority_from_string(const std::string& s) {
  if (s == "retention-first") return Priority::RetentionFirst;
  if (s == "dividend-first") return Priority::DividendFirst;
  throw std::invalid_argument("unknown priority: " + s);
}

SolverConfig SolverConfig::defaults(const ModelParams& p, const ActionGrid& grid) {
  p.validate();
  grid.validate();
  SolverConfig cfg;
  // Every G-function and every fallback gap decays no slower than the
  // slowest cell rate; 45 e-folds of that rate pushes both below any
  // tolerance used here.
  double min_rate = kInf;
  for (double a : grid.retentions) {
    if (a <= 0.0) continue;
    for (double c : grid.dividends) {
      const ThetaPair th = theta_roots(p, a, c);
      min_rate = std::min(min_rate, std::min(th.theta1, -th.theta2));
    }
  }
  if (!std::isfinite(min_rate) || min_rate <= 0.0) min_rate = 1.0;
  cfg.x_max = std::clamp(45.0 / min_rate, 50.0, 1.0e5);
  cfg.coarse_points = 2048;
  cfg.refine_tol = 1e-6;
  cfg.delta_tol = 1e-12 * grid.c_max() / p.q;
  if (cfg.delta_tol <= 0.0) cfg.delta_tol = 1e-12;
  cfg.inf_threshold_M = 10.0 * cfg.x_max;
  return cfg;
}

void SolverConfig::validate() const {
  if (!(x_max > 0.0)) throw std::invalid_argument("SolverConfig: x_max must be > 0");
  if (coarse_points < 64) throw std::invalid_argument("SolverConfig: coarse_points must be >= 64");
  if (!(refine_tol > 0.0)) throw std::invalid_argument("SolverConfig: refine_tol must be > 0");
  if (!(delta_tol > 0.0)) throw std::invalid_argument("SolverConfig: delta_tol must be > 0");
  if (!(inf_threshold_M > x_max))
    throw std::invalid_argument("SolverConfig: inf_threshold_M must exceed x_max");
}

void ThresholdSolution::check_indices(int i, int j) const {
  if (i < 0 || i >= m() || j < 0 || j >= n())
    throw std::out_of_range("ThresholdSolution: cell index out of range");
}

std::pair<int, int> ThresholdSolution::owning_cell(double x, int i, int j) const {
  check_indices(i, j);
  for (;;) {
    const double yi = y(i, j);
    const double zi = z(i, j);
    const double t = std::min(yi, zi);
    if (x < t) return {i, j};
    if (yi < zi) {
      ++i;
    } else if (zi < yi) {
      ++j;
    } else {
      // y == z: simultaneous switch (or both +inf, which x < t already caught)
      ++i;
      ++j;
    }
  }
}

namespace {

// k = 0 pieces are evaluated without the homogeneous term: they extend to
// arbitrarily large x where e^{theta1 x} would overflow.
inline double piece_value(double c_over_q, double k, const ThetaPair& th, double x) {
  const double base = c_over_q * (-std::expm1(th.theta2 * x));
  if (k == 0.0) return base;
  return base + k * (std::exp(th.theta1 * x) - std::exp(th.theta2 * x));
}

inline double piece_slope(double c_over_q, double k, const ThetaPair& th, double x) {
  const double e2 = std::exp(th.theta2 * x);
  const double base = -c_over_q * th.theta2 * e2;
  if (k == 0.0) return base;
  return base + k * (th.theta1 * std::exp(th.theta1 * x) - th.theta2 * e2);
}

inline double piece_curvature(double c_over_q, double k, const ThetaPair& th, double x) {
  const double e2 = std::exp(th.theta2 * x);
  const double base = -c_over_q * th.theta2 * th.theta2 * e2;
  if (k == 0.0) return base;
  return base +
         k * (th.theta1 * th.theta1 * std::exp(th.theta1 * x) - th.theta2 * th.theta2 * e2);
}

}  // namespace

double ThresholdSolution::value(double x, int i, int j) const {
  if (x < 0.0) throw std::domain_error("ThresholdSolution::value: x must be >= 0");
  const auto [oi, oj] = owning_cell(x, i, j);
  return piece_value(grid.dividends[oj] / params.q, k(oi, oj), theta(oi, oj), x);
}

double ThresholdSolution::slope(double x, int i, int j) const {
  const auto [oi, oj] = owning_cell(x, i, j);
  return piece_slope(grid.dividends[oj] / params.q, k(oi, oj), theta(oi, oj), x);
}

double ThresholdSolution::curvature(double x, int i, int j) const {
  const auto [oi, oj] = owning_cell(x, i, j);
  return piece_curvature(grid.dividends[oj] / params.q, k(oi, oj), theta(oi, oj), x);
}

double ThresholdSolution::extended_value(double x, double a, double c) const {
  const double a_lo = grid.retentions.back();
  const double a_hi = grid.retentions.front();
  const double c_lo = grid.dividends.front();
  const double c_hi = grid.dividends.back();
  const double eps_a = 1e-12 * (1.0 + std::abs(a));
  const double eps_c = 1e-12 * (1.0 + std::abs(c));
  if (a < a_lo - eps_a || a > a_hi + eps_a)
    throw std::domain_error("extended_value: retention outside grid hull");
  if (c < c_lo - eps_c || c > c_hi + eps_c)
    throw std::domain_error("extended_value: dividend rate outside grid hull");

  // snap a down: largest grid retention <= a (retentions are descending)
  int i = 0;
  while (i < m() - 1 && grid.retentions[i] > a + eps_a) ++i;
  // snap c up: smallest grid dividend >= c
  int j = n() - 1;
  while (j > 0 && grid.dividends[j - 1] >= c - eps_c) --j;
  return value(x, i, j);
}

std::vector<double> ThresholdSolution::finite_thresholds() const {
  std::vector<double> ts;
  for (double v : y_star)
    if (std::isfinite(v)) ts.push_back(v);
  for (double v : z_star)
    if (std::isfinite(v)) ts.push_back(v);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

double g_function(const ModelParams& p, const ActionGrid& grid, GKind kind, int i, int j,
                  double x, const Continuation& cont) {
  if (x < 0.0) throw std::domain_error("g_function: x must be >= 0");
  const double a = grid.retentions[i];
  const double c = grid.dividends[j];
  const ThetaPair th = theta_roots(p, a, c);
  (void)kind;  // the direction is encoded in `cont`
  if (x == 0.0)
    return (cont.slope_at_0 + (c / p.q) * th.theta2) / th.omega();
  const double num = cont.value(x) - (c / p.q) * (-std::expm1(th.theta2 * x));
  const double den = std::exp(th.theta1 * x) - std::exp(th.theta2 * x);
  return num / den;
}

namespace {

struct Bracket {
  double lo, hi;     // refinement interval around the pick
  double pick;       // the near-best abscissa
  double pick_val;
};

// Uniform scan of [0, x_hi]; returns the bracket around the first abscissa
// whose value ties the scan maximum within tol.
Bracket scan_level(const std::function<double(double)>& f, double x_hi, int n,
                   double refine_tol) {
  const double step = x_hi / static_cast<double>(n - 1);
  std::vector<double> fx(n);
  double best = -kInf;
  for (int k = 0; k < n; ++k) {
    fx[k] = f(step * k);
    best = std::max(best, fx[k]);
  }
  int k0 = 0;
  const double tol_val = refine_tol * (1.0 + std::abs(best));
  while (fx[k0] < best - tol_val) ++k0;
  Bracket br;
  br.lo = step * (k0 > 0 ? k0 - 1 : 0);
  br.hi = step * (k0 < n - 1 ? k0 + 1 : n - 1);
  br.pick = step * k0;
  br.pick_val = fx[k0];
  return br;
}

}  // namespace

MaximizeResult maximize_scalar(const std::function<double(double)>& f, double x_max,
                               int coarse_points, double refine_tol) {
  if (coarse_points < 2 || !(x_max > 0.0))
    throw std::invalid_argument("maximize_scalar: bad scan parameters");

  // Multi-scale uniform scan: a peak narrower than the top-level spacing is
  // invisible to a single pass, so repeat the scan on shrinking prefixes of
  // the domain. Levels are deterministic; ties resolve to the smallest x.
  std::vector<Bracket> brackets;
  double best_val = -kInf;
  double x_hi = x_max;
  for (int level = 0; level < 5; ++level) {
    Bracket br = scan_level(f, x_hi, coarse_points, refine_tol);
    best_val = std::max(best_val, br.pick_val);
    brackets.push_back(br);
    x_hi /= 8.0;
    if (x_hi <= refine_tol * coarse_points) break;
  }

  // Refine the best bracket (leftmost among near-best picks).
  const double tol_pick = refine_tol * (1.0 + std::abs(best_val));
  const Bracket* chosen = nullptr;
  for (const Bracket& br : brackets)
    if (br.pick_val >= best_val - tol_pick && (!chosen || br.pick < chosen->pick)) chosen = &br;

  // Left-biased golden-section maximization: on ties keep the left
  // subinterval so plateaus resolve to their smallest point.
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = chosen->lo, b = chosen->hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  double refined_best = std::max({best_val, fc, fd});
  while (b - a > refine_tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
    refined_best = std::max({refined_best, fc, fd});
  }

  // Smallest abscissa whose value ties the best within tolerance.
  const double tol_fin = refine_tol * (1.0 + std::abs(refined_best));
  const double f_lo = f(chosen->lo);
  double arg, val;
  if (f_lo >= refined_best - tol_fin) {
    arg = chosen->lo;
    val = std::max(refined_best, f_lo);
  } else if (f(a) >= refined_best - tol_fin) {
    arg = a;
    val = refined_best;
  } else {
    arg = 0.5 * (a + b);
    val = refined_best;
  }
  return {val, arg};
}

double fallback_threshold(const std::function<double(double)>& gap, double delta_tol,
                          double x_max, int scan_points) {
  if (scan_points < 2) throw std::invalid_argument("fallback_threshold: bad scan size");
  const int n = scan_points;
  const double step = x_max / static_cast<double>(n - 1);

  std::vector<double> g(n);
  for (int k = 0; k < n; ++k) g[k] = gap(step * k);

  // Smallest x beyond which the gap stays below delta: locate the last
  // scan point at or above the level. If the singleton curve never rises
  // to delta above the continuation, switching immediately loses nothing.
  int last = -1;
  for (int k = n - 1; k >= 0; --k) {
    if (g[k] >= delta_tol) {
      last = k;
      break;
    }
  }
  if (last < 0) return 0.0;
  if (last == n - 1) return x_max;  // scan cap; x_max is chosen to avoid this

  double lo = step * last, hi = step * (last + 1);
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gap(mid) >= delta_tol)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

struct ApproxCmp {
  double tol;
  bool eq(double u, double v) const { return std::abs(u - v) <= tol; }
  bool gt(double u, double v) const { return u > v && !eq(u, v); }
  bool lt(double u, double v) const { return u < v && !eq(u, v); }
  bool le(double u, double v) const { return u < v || eq(u, v); }
};

}  // namespace

CasePick select_case(double maxA, double maxC, double maxE, double gA, double gC, double gE,
                     Priority priority) {
  const double scale = std::max({std::abs(maxA), std::abs(maxC), std::abs(maxE)});
  const ApproxCmp m{1e-9 * (1.0 + scale)};
  const double gscale = std::max({std::abs(gA), std::abs(gC), std::abs(gE)});
  const ApproxCmp g{1e-9 * (1.0 + gscale)};

  // Case 1: cutting retention strictly dominates.
  if (m.gt(maxA, std::max(maxC, maxE))) return {gA, kInf};
  // Case 2: raising dividends strictly dominates.
  if (m.gt(maxC, std::max(maxA, maxE))) return {kInf, gC};
  // Case 3: the joint move strictly dominates.
  if (m.gt(maxE, std::max(maxA, maxC))) return {gE, gE};
  // Case 4: A and C tie above E.
  if (m.eq(maxA, maxC) && m.gt(maxA, maxE)) {
    if (priority == Priority::RetentionFirst) {
      return {g.le(gA, gC) ? gA : kInf, g.lt(gC, gA) ? gC : kInf};
    }
    return {g.lt(gA, gC) ? gA : kInf, g.le(gC, gA) ? gC : kInf};
  }
  // Case 5: E and A tie above C.
  if (m.eq(maxE, maxA) && m.gt(maxE, maxC)) {
    if (g.le(gE, gA)) return {gE, gE};
    return {gA, kInf};
  }
  // Case 6: E and C tie above A.
  if (m.eq(maxE, maxC) && m.gt(maxE, maxA)) {
    if (g.le(gE, gC)) return {gE, gE};
    return {kInf, gC};
  }
  // Case 7: three-way tie (also the catch-all for tolerance borderline).
  const double gAC = std::min(gA, gC);
  double y, z;
  if (priority == Priority::RetentionFirst) {
    if (g.le(gE, std::min(gA, gC)))
      y = gE;
    else if (g.lt(gA, std::min(gE, gC)) || (g.eq(gA, gC) && g.lt(gA, gE)))
      y = gA;
    else
      y = kInf;
    if (g.le(gE, gAC))
      z = gE;
    else if (g.lt(gC, std::min(gE, gA)))
      z = gC;
    else
      z = kInf;
  } else {
    if (g.le(gE, gAC))
      y = gE;
    else if (g.lt(gA, std::min(gE, gC)))
      y = gA;
    else
      y = kInf;
    if (g.le(gE, gAC))
      z = gE;
    else if (g.lt(gC, std::min(gE, gA)) || (g.eq(gC, gA) && g.lt(gC, gE)))
      z = gC;
    else
      z = kInf;
  }
  return {y, z};
}

namespace {

struct DirectionResult {
  double max = -kInf;
  double g = kInf;
  double k = 0.0;  // G evaluated exactly at g, so the paste at g is exact
  bool available = false;
};

}  // namespace

ThresholdSolution solve_backward(const ModelParams& p, const ActionGrid& grid,
                                 const SolverConfig& cfg) {
  p.validate();
  grid.validate();
  cfg.validate();
  if (grid.retentions.back() <= 0.0)
    throw degenerate_diffusion_error(
        "solve_backward: grids containing retention 0 are not supported");

  ThresholdSolution sol;
  sol.params = p;
  sol.grid = grid;
  sol.config = cfg;
  sol.priority = cfg.priority;
  const int m = grid.m(), n = grid.n();
  sol.y_star.assign(static_cast<std::size_t>(m) * n, kInf);
  sol.z_star.assign(static_cast<std::size_t>(m) * n, kInf);
  sol.k_star.assign(static_cast<std::size_t>(m) * n, 0.0);
  sol.thetas.resize(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      sol.thetas[sol.idx(i, j)] = theta_roots(p, grid.retentions[i], grid.dividends[j]);

  const double zero_tol = 1e-9 * (1.0 + grid.c_max() / p.q);

  auto solve_direction = [&](int i, int j, GKind kind, int ti, int tj) {
    Continuation cont{
        [&sol, ti, tj](double x) { return sol.value(x, ti, tj); },
        sol.slope(0.0, ti, tj),
    };
    auto G = [&](double x) { return g_function(p, grid, kind, i, j, x, cont); };
    MaximizeResult r = maximize_scalar(G, cfg.x_max, cfg.coarse_points, cfg.refine_tol);
    DirectionResult out;
    out.available = true;
    // decide the zero-max case on the value at the chosen abscissa so the
    // stored coefficient is exactly the one compared and pasted with
    r.max_value = G(r.arg);
    if (r.max_value <= zero_tol) {
      // Zero-max case: G never strictly gains; place the switch where the
      // singleton curve and the continuation have merged to within delta.
      const double cq = grid.dividends[j] / p.q;
      const ThetaPair th = sol.theta(i, j);
      auto gap = [&](double x) {
        return cq * (-std::expm1(th.theta2 * x)) - sol.value(x, ti, tj);
      };
      out.max = 0.0;
      out.g = fallback_threshold(gap, cfg.delta_tol, cfg.x_max, cfg.coarse_points);
      out.k = 0.0;
    } else {
      out.max = r.max_value;
      out.g = r.arg;
      out.k = G(r.arg);
    }
    return out;
  };

  for (int i = m - 1; i >= 0; --i) {
    for (int j = n - 1; j >= 0; --j) {
      if (i == m - 1 && j == n - 1) continue;  // terminal cell is the plain singleton

      DirectionResult A, C, E;
      if (i < m - 1) A = solve_direction(i, j, GKind::A, i + 1, j);
      if (j < n - 1) C = solve_direction(i, j, GKind::C, i, j + 1);
      if (i < m - 1 && j < n - 1) E = solve_direction(i, j, GKind::E, i + 1, j + 1);

      double y = kInf, z = kInf, k = 0.0;
      if (A.available && C.available) {
        const CasePick pick =
            select_case(A.max, C.max, E.max, A.g, C.g, E.g, cfg.priority);
        y = pick.y;
        z = pick.z;
        if (std::isfinite(y) && y == z)
          k = E.k;
        else if (y < z)
          k = A.k;
        else if (z < y)
          k = C.k;
        else
          k = std::max({A.max, C.max, E.max});
      } else if (A.available) {
        y = A.g;
        k = A.k;
      } else {
        z = C.g;
        k = C.k;
      }
      sol.y_star[sol.idx(i, j)] = y;
      sol.z_star[sol.idx(i, j)] = z;
      sol.k_star[sol.idx(i, j)] = k;
    }
  }

  // Self-certification: sample the switch obstacles of every cell. A
  // materially positive obstacle means the two continuation values cross
  // and the single-switch construction cannot dominate both. Crossing
  // windows open at thresholds, so sample geometrically from small x and
  // around every finite threshold, not just uniformly.
  std::vector<double> probe;
  for (double x = 1e-3; x < cfg.x_max; x *= 1.7) probe.push_back(x);
  for (double t : sol.finite_thresholds()) {
    for (double off : {1e-4, 1e-2, 0.1, 0.5, 1.0, 3.0, 10.0}) {
      if (t - off > 0.0) probe.push_back(t - off);
      if (t + off < cfg.x_max) probe.push_back(t + off);
    }
  }
  const double flag_tol = 1e-7 * (1.0 + grid.c_max() / p.q);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == m - 1 && j == n - 1) continue;
      bool bad = false;
      for (std::size_t s = 0; s < probe.size() && !bad; ++s) {
        const double x = probe[s];
        const double w = sol.value(x, i, j);
        if (i < m - 1 && sol.value(x, i + 1, j) - w > flag_tol) bad = true;
        if (j < n - 1 && sol.value(x, i, j + 1) - w > flag_tol) bad = true;
      }
      if (bad) sol.inconsistent_cells.emplace_back(i, j);
    }
  }
  return sol;
}

namespace {

// Locate the step-function cell for off-grid (a, c): a in (a_{i+1}, a_i]
// picks row i, c in [c_j, c_{j+1}) picks column j.
int step_row(const ActionGrid& g, double a) {
  int i = 0;
  while (i < g.m() - 1 && a <= g.retentions[i + 1]) ++i;
  return i;
}

int step_col(const ActionGrid& g, double c) {
  int j = g.n() - 1;
  while (j > 0 && c < g.dividends[j]) --j;
  return j;
}

}  // namespace

double step_zeta_A(const ThresholdSolution& sol, double M, double a, double c) {
  const double v = sol.y(step_row(sol.grid, a), step_col(sol.grid, c));
  return std::isfinite(v) ? v : M;
}

double step_zeta_C(const ThresholdSolution& sol, double M, double a, double c) {
  const double v = sol.z(step_row(sol.grid, a), step_col(sol.grid, c));
  return std::isfinite(v) ? v : M;
}

namespace {

std::string fmt17(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_thresholds_csv(std::ostream& os, const ThresholdSolution& sol) {
  os << "i,j,a_i,c_j,y_star,z_star,k_star\n";
  for (int i = 0; i < sol.m(); ++i) {
    for (int j = 0; j < sol.n(); ++j) {
      os << i << ',' << j << ',' << fmt17(sol.grid.retentions[i]) << ','
         << fmt17(sol.grid.dividends[j]) << ',' << fmt17(sol.y(i, j)) << ','
         << fmt17(sol.z(i, j)) << ',' << fmt17(sol.k(i, j)) << '\n';
    }
  }
}

namespace {

double parse_threshold_field(const std::string& s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::stod(s);
}

}  // namespace

ThresholdSolution read_thresholds_csv(std::istream& is, const ModelParams& p,
                                      const ActionGrid& grid, const SolverConfig& cfg) {
  ThresholdSolution sol;
  sol.params = p;
  sol.grid = grid;
  sol.config = cfg;
  sol.priority = cfg.priority;
  const int m = grid.m(), n = grid.n();
  sol.y_star.assign(static_cast<std::size_t>(m) * n, kInf);
  sol.z_star.assign(static_cast<std::size_t>(m) * n, kInf);
  sol.k_star.assign(static_cast<std::size_t>(m) * n, 0.0);
  sol.thetas.resize(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      sol.thetas[sol.idx(i, j)] = theta_roots(p, grid.retentions[i], grid.dividends[j]);

  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("thresholds csv: empty file");
  int rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 7) throw std::runtime_error("thresholds csv: malformed row: " + line);
    const int i = std::stoi(fields[0]);
    const int j = std::stoi(fields[1]);
    sol.check_indices(i, j);
    sol.y_star[sol.idx(i, j)] = parse_threshold_field(fields[4]);
    sol.z_star[sol.idx(i, j)] = parse_threshold_field(fields[5]);
    sol.k_star[sol.idx(i, j)] = parse_threshold_field(fields[6]);
    ++rows;
  }
  if (rows != m * n) throw std::runtime_error("thresholds csv: wrong row count");
  return sol;
}

}  // namespace divopt
