#include <doctest.h>

#include <cmath>
#include <sstream>

#include "divopt/rng.hpp"
#include "divopt/threshold.hpp"

using namespace divopt;

namespace {

const ModelParams kEx1{6.0, 1.5, 2.0, 0.1};
const ModelParams kEx23{10.0, 1.5, 2.0, 0.1};

ThresholdSolution solve_example1() {
  const ActionGrid grid({0.90, 0.80}, {2.0, 4.0});
  return solve_backward(kEx1, grid, SolverConfig::defaults(kEx1, grid));
}

ThresholdSolution solve_example2() {
  const ActionGrid grid({0.90, 0.80}, {2.0, 4.0});
  return solve_backward(kEx23, grid, SolverConfig::defaults(kEx23, grid));
}

ThresholdSolution solve_example3() {
  const ActionGrid grid({0.90, 0.85, 0.80}, {2.0, 3.0, 4.0});
  return solve_backward(kEx23, grid, SolverConfig::defaults(kEx23, grid));
}

double rnd(Xoshiro256pp& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

}  // namespace

TEST_CASE("maximize_scalar on synthetic functions") {
  // flat function: smallest maximizer is 0
  auto flat = [](double) { return 3.5; };
  MaximizeResult r = maximize_scalar(flat, 100.0, 256, 1e-6);
  CHECK(r.max_value == doctest::Approx(3.5));
  CHECK(r.arg == 0.0);

  // unimodal with analytic peak at 5
  auto bump = [](double x) { return std::exp(-(x - 5.0) * (x - 5.0)); };
  r = maximize_scalar(bump, 50.0, 512, 1e-6);
  CHECK(std::abs(r.arg - 5.0) <= 1e-5);
  CHECK(r.max_value == doctest::Approx(1.0).epsilon(1e-9));

  // decreasing from 0: smallest maximizer exactly 0
  auto dec = [](double x) { return 1.0 / (1.0 + x); };
  r = maximize_scalar(dec, 10.0, 128, 1e-6);
  CHECK(r.arg == 0.0);
  CHECK(r.max_value == doctest::Approx(1.0));
}

TEST_CASE("fallback_threshold on synthetic gaps") {
  // analytic inversion: gap e^{-x} crosses 1e-3 at -ln(1e-3)
  auto gap = [](double x) { return std::exp(-x); };
  const double t = fallback_threshold(gap, 1e-3, 50.0, 2048);
  CHECK(t == doctest::Approx(-std::log(1e-3)).epsilon(1e-6));

  // identical cells: gap identically zero -> 0
  auto zero = [](double) { return 0.0; };
  CHECK(fallback_threshold(zero, 1e-3, 50.0, 512) == 0.0);

  // continuation strictly dominates -> 0
  auto neg = [](double x) { return -0.1 * (1.0 + x); };
  CHECK(fallback_threshold(neg, 1e-3, 50.0, 512) == 0.0);

  // hump that rises above delta then decays: pick the right-hand crossing
  auto hump = [](double x) { return x * std::exp(-x); };
  const double th = fallback_threshold(hump, 1e-3, 80.0, 4096);
  CHECK(hump(th) == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(th > 1.0);  // the decaying side, not the rising side
}

TEST_CASE("select_case transcription") {
  // strict winners
  CHECK(select_case(3.0, 1.0, 2.0, 7.0, 8.0, 9.0, Priority::DividendFirst).y == 7.0);
  CHECK(select_case(3.0, 1.0, 2.0, 7.0, 8.0, 9.0, Priority::DividendFirst).z == kInf);
  CHECK(select_case(1.0, 3.0, 2.0, 7.0, 8.0, 9.0, Priority::DividendFirst).y == kInf);
  CHECK(select_case(1.0, 3.0, 2.0, 7.0, 8.0, 9.0, Priority::DividendFirst).z == 8.0);
  {
    const CasePick p = select_case(1.0, 2.0, 3.0, 7.0, 8.0, 9.0, Priority::DividendFirst);
    CHECK(p.y == 9.0);
    CHECK(p.z == 9.0);
  }
  // Case 4 tie: the priority side moves
  {
    const CasePick p = select_case(3.0, 3.0, 1.0, 7.0, 7.0, 9.0, Priority::RetentionFirst);
    CHECK(p.y == 7.0);
    CHECK(p.z == kInf);
  }
  {
    const CasePick p = select_case(3.0, 3.0, 1.0, 7.0, 7.0, 9.0, Priority::DividendFirst);
    CHECK(p.y == kInf);
    CHECK(p.z == 7.0);
  }
  // Case 4 with distinct g-points: smaller g wins regardless of priority
  {
    const CasePick p = select_case(3.0, 3.0, 1.0, 5.0, 7.0, 9.0, Priority::DividendFirst);
    CHECK(p.y == 5.0);
    CHECK(p.z == kInf);
  }
  // Case 5: E ties A above C
  {
    const CasePick p = select_case(3.0, 1.0, 3.0, 7.0, 8.0, 6.0, Priority::DividendFirst);
    CHECK(p.y == 6.0);
    CHECK(p.z == 6.0);
  }
  {
    const CasePick p = select_case(3.0, 1.0, 3.0, 5.0, 8.0, 6.0, Priority::DividendFirst);
    CHECK(p.y == 5.0);
    CHECK(p.z == kInf);
  }
  // Case 6: E ties C above A
  {
    const CasePick p = select_case(1.0, 3.0, 3.0, 7.0, 8.0, 6.0, Priority::DividendFirst);
    CHECK(p.y == 6.0);
    CHECK(p.z == 6.0);
  }
  {
    const CasePick p = select_case(1.0, 3.0, 3.0, 7.0, 5.0, 6.0, Priority::DividendFirst);
    CHECK(p.y == kInf);
    CHECK(p.z == 5.0);
  }
  // Case 7 three-way tie, E smallest
  {
    const CasePick p = select_case(2.0, 2.0, 2.0, 7.0, 8.0, 6.0, Priority::DividendFirst);
    CHECK(p.y == 6.0);
    CHECK(p.z == 6.0);
  }
  // Case 7, A strictly smallest g
  {
    const CasePick p = select_case(2.0, 2.0, 2.0, 5.0, 8.0, 6.0, Priority::RetentionFirst);
    CHECK(p.y == 5.0);
    CHECK(p.z == kInf);
  }
  // Case 7, gA == gC below gE: priority decides
  {
    const CasePick p = select_case(2.0, 2.0, 2.0, 5.0, 5.0, 6.0, Priority::RetentionFirst);
    CHECK(p.y == 5.0);
    CHECK(p.z == kInf);
  }
  {
    const CasePick p = select_case(2.0, 2.0, 2.0, 5.0, 5.0, 6.0, Priority::DividendFirst);
    CHECK(p.y == kInf);
    CHECK(p.z == 5.0);
  }
}

TEST_CASE("golden example 1: thresholds and switch sequence") {
  const ThresholdSolution sol = solve_example1();
  // cell (0,0) = (a=0.9, c=2): dividend raise at 13.04
  CHECK(sol.y(0, 0) == kInf);
  CHECK(std::abs(sol.z(0, 0) - 13.04) <= 0.01 * 13.04);
  // cell (0,1) = (a=0.9, c=4): retention cut at 348.5
  CHECK(sol.z(0, 1) == kInf);
  CHECK(std::abs(sol.y(0, 1) - 348.5) <= 0.01 * 348.5);
  // structural invariants: last row/column never switch
  CHECK(sol.y(1, 0) == kInf);
  CHECK(sol.y(1, 1) == kInf);
  CHECK(sol.z(0, 1) == kInf);
  CHECK(sol.z(1, 1) == kInf);
  // k nonnegative everywhere
  for (double k : sol.k_star) CHECK(k >= 0.0);
}

TEST_CASE("golden example 2: immediate retention cut then dividend raise") {
  const ThresholdSolution sol = solve_example2();
  CHECK(sol.y(0, 0) == 0.0);
  CHECK(std::abs(sol.z(1, 0) - 1.92) <= 0.01 * 1.92);
  // value curves for (0.9,2) and (0.8,2) coincide (switch happens at x=0)
  for (double x : {0.5, 1.0, 5.0, 20.0})
    CHECK(sol.value(x, 0, 0) == doctest::Approx(sol.value(x, 1, 0)).epsilon(1e-12));
}

TEST_CASE("golden example 3: 3x3 chain") {
  const ThresholdSolution sol = solve_example3();
  CHECK(sol.y(0, 0) == 0.0);
  CHECK(std::abs(sol.z(1, 0) - 1.56) <= 0.01 * 1.56);
  CHECK(std::abs(sol.z(1, 1) - 1.91) <= 0.01 * 1.91);
  CHECK(std::abs(sol.y(1, 2) - 9.79) <= 0.01 * 9.79);
}

TEST_CASE("eval_W boundary, terminal cell, continuity") {
  const ThresholdSolution sol = solve_example1();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(sol.value(0.0, i, j) == 0.0);

  // terminal cell is the plain singleton at every x
  for (double x : {0.0, 1.0, 7.3, 40.0})
    CHECK(sol.value(x, 1, 1) ==
          doctest::Approx(singleton_value(kEx1, 0.80, 4.0, x)).epsilon(1e-13));

  // continuity across the dividend threshold of cell (0,0)
  const double t = sol.z(0, 0);
  const double wl = sol.value(t - 1e-9, 0, 0);
  const double wr = sol.value(t + 1e-9, 0, 0);
  CHECK(std::abs(wl - wr) <= 1e-9 * (1.0 + std::abs(wl)));

  CHECK_THROWS_AS((void)sol.value(1.0, 2, 0), std::out_of_range);
}

TEST_CASE("1x1 grid reduces to the singleton") {
  const ActionGrid grid({0.9}, {2.0});
  const ThresholdSolution sol = solve_backward(kEx1, grid, SolverConfig::defaults(kEx1, grid));
  CHECK(sol.y(0, 0) == kInf);
  CHECK(sol.z(0, 0) == kInf);
  for (double x : {0.0, 2.0, 11.0})
    CHECK(sol.value(x, 0, 0) ==
          doctest::Approx(singleton_value(kEx1, 0.9, 2.0, x)).epsilon(1e-13));
}

TEST_CASE("g_function x=0 limit agrees with small-x evaluation") {
  const ThresholdSolution sol = solve_example1();
  const Continuation cont{[&](double x) { return sol.value(x, 0, 1); },
                          sol.slope(0.0, 0, 1)};
  const ActionGrid& grid = sol.grid;
  const double g0 = g_function(kEx1, grid, GKind::C, 0, 0, 0.0, cont);
  const double g_eps = g_function(kEx1, grid, GKind::C, 0, 0, 1e-8, cont);
  CHECK(std::abs(g0 - g_eps) <= 1e-6);
}

TEST_CASE("argmax of the winning G matches the reported threshold") {
  const ThresholdSolution sol = solve_example1();
  const Continuation cont{[&](double x) { return sol.value(x, 0, 1); },
                          sol.slope(0.0, 0, 1)};
  auto G = [&](double x) { return g_function(kEx1, sol.grid, GKind::C, 0, 0, x, cont); };
  const MaximizeResult r = maximize_scalar(G, 600.0, 4096, 1e-7);
  CHECK(std::abs(r.arg - 13.04) <= 0.01 * 13.04);
  // the stored coefficient is the G-max
  CHECK(sol.k(0, 0) == doctest::Approx(r.max_value).epsilon(1e-6));
}

TEST_CASE("extended value snapping") {
  const ThresholdSolution sol = solve_example1();
  const double x = 7.0;
  // exact grid points
  CHECK(sol.extended_value(x, 0.9, 2.0) == sol.value(x, 0, 0));
  CHECK(sol.extended_value(x, 0.8, 4.0) == sol.value(x, 1, 1));
  // a between grid points snaps down, c snaps up
  CHECK(sol.extended_value(x, 0.85, 2.0) == sol.value(x, 1, 0));
  CHECK(sol.extended_value(x, 0.9, 3.0) == sol.value(x, 0, 1));
  CHECK(sol.extended_value(x, 0.85, 2.5) == sol.value(x, 1, 1));
  CHECK_THROWS_AS((void)sol.extended_value(x, 0.5, 2.0), std::domain_error);
  CHECK_THROWS_AS((void)sol.extended_value(x, 0.9, 5.0), std::domain_error);
}

TEST_CASE("monotonicity and bound on a randomized sweep") {
  Xoshiro256pp rng(99);
  int cases = 0;
  int crossing_skips = 0;
  while (cases < 300) {
    ModelParams p;
    p.mu = rnd(rng, 0.5, 10.0);
    p.sigma = rnd(rng, 0.4, 2.5);
    p.b = rnd(rng, -1.0, 2.5);
    p.q = rnd(rng, 0.05, 0.5);
    const int m = 1 + static_cast<int>(rnd(rng, 0.0, 2.999));
    const int n = 1 + static_cast<int>(rnd(rng, 0.0, 2.999));
    std::vector<double> as, cs;
    double a = rnd(rng, 0.55, 1.0);
    for (int i = 0; i < m; ++i) {
      as.push_back(a);
      a -= rnd(rng, 0.05, 0.2);
    }
    double c = rnd(rng, 0.0, 2.0);
    for (int j = 0; j < n; ++j) {
      cs.push_back(c);
      c += rnd(rng, 0.3, 2.0);
    }
    ActionGrid grid(std::move(as), std::move(cs));
    SolverConfig cfg = SolverConfig::defaults(p, grid);
    cfg.coarse_points = 512;  // keep the sweep cheap
    const ThresholdSolution sol = solve_backward(p, grid, cfg);
    // Draws where the continuation values cross are outside the
    // single-switch construction's domain; the solver flags them.
    if (!sol.case_consistent()) {
      ++crossing_skips;
      continue;
    }
    ++cases;

    const double cap = grid.c_max() / p.q;
    double prev[9] = {0};
    for (int s = 0; s <= 40; ++s) {
      const double x = cfg.x_max * s / 40.0;
      for (int i = 0; i < grid.m(); ++i) {
        for (int j = 0; j < grid.n(); ++j) {
          const double w = sol.value(x, i, j);
          CHECK(w <= cap + 1e-9);
          CHECK(w >= -1e-12);
          if (s > 0) CHECK(w >= prev[i * grid.n() + j] - 1e-9);  // nondecreasing in x
          prev[i * grid.n() + j] = w;
          if (i + 1 < grid.m()) CHECK(w >= sol.value(x, i + 1, j) - 1e-9);
          if (j + 1 < grid.n()) CHECK(w >= sol.value(x, i, j + 1) - 1e-9);
        }
      }
    }
  }
  // the crossing configurations exist but are far from generic
  CHECK(crossing_skips < cases);
  // example 1's orderings hold; examples 2/3 contain the documented
  // crossing (cutting retention freezes out a dividend-first route that is
  // briefly better), which the certification pass must detect
  CHECK(solve_example1().case_consistent());
  CHECK_FALSE(solve_example2().case_consistent());
  CHECK_FALSE(solve_example3().case_consistent());
}

TEST_CASE("smooth pasting at real-maximum thresholds") {
  const ThresholdSolution sol = solve_example1();
  const double t = sol.z(0, 0);  // 13.04 threshold comes from a strict G max
  const double eps = 1e-5;
  const double left = (sol.value(t - eps, 0, 0) - sol.value(t - 2.0 * eps, 0, 0)) / eps;
  const double right = (sol.value(t + 2.0 * eps, 0, 0) - sol.value(t + eps, 0, 0)) / eps;
  CHECK(left == doctest::Approx(right).epsilon(1e-3));
}

TEST_CASE("W_xx jump sign at thresholds") {
  const ThresholdSolution sol = solve_example1();
  const double t = sol.z(0, 0);
  const double wxx_l = sol.curvature(t - 1e-7, 0, 0);
  const double wxx_r = sol.curvature(t + 1e-7, 0, 0);
  const double scale = std::abs(wxx_l) + std::abs(wxx_r) + 1.0;
  CHECK(wxx_l - wxx_r >= -1e-4 * scale);
}

TEST_CASE("solve_backward determinism") {
  const ThresholdSolution s1 = solve_example3();
  const ThresholdSolution s2 = solve_example3();
  REQUIRE(s1.y_star.size() == s2.y_star.size());
  for (std::size_t k = 0; k < s1.y_star.size(); ++k) {
    CHECK(s1.y_star[k] == s2.y_star[k]);
    CHECK(s1.z_star[k] == s2.z_star[k]);
    CHECK(s1.k_star[k] == s2.k_star[k]);
  }
}

TEST_CASE("csv round trip") {
  const ThresholdSolution sol = solve_example1();
  std::ostringstream os;
  write_thresholds_csv(os, sol);
  std::istringstream is(os.str());
  const ThresholdSolution back = read_thresholds_csv(is, sol.params, sol.grid, sol.config);
  for (std::size_t k = 0; k < sol.y_star.size(); ++k) {
    CHECK(back.y_star[k] == sol.y_star[k]);
    CHECK(back.z_star[k] == sol.z_star[k]);
    CHECK(back.k_star[k] == sol.k_star[k]);
  }
  CHECK(os.str().find("inf") != std::string::npos);
}

TEST_CASE("step-function export replaces +inf with M") {
  const ThresholdSolution sol = solve_example1();
  const double M = sol.config.inf_threshold_M;
  // cell (0,0): y = +inf -> M; z finite
  CHECK(step_zeta_A(sol, M, 0.9, 2.0) == M);
  CHECK(step_zeta_C(sol, M, 0.9, 2.0) == doctest::Approx(sol.z(0, 0)));
  // cell (0,1): y finite
  CHECK(step_zeta_A(sol, M, 0.9, 4.0) == doctest::Approx(sol.y(0, 1)));
}

TEST_CASE("solver rejects zero retention rows and bad config") {
  const ActionGrid grid({0.9, 0.0}, {2.0, 4.0});
  SolverConfig cfg;
  cfg.x_max = 100.0;
  cfg.delta_tol = 1e-10;
  cfg.inf_threshold_M = 1000.0;
  CHECK_THROWS_AS(solve_backward(kEx1, grid, cfg), degenerate_diffusion_error);

  SolverConfig bad = cfg;
  bad.inf_threshold_M = 1.0;
  const ActionGrid ok_grid({0.9, 0.8}, {2.0, 4.0});
  CHECK_THROWS_AS(solve_backward(kEx1, ok_grid, bad), std::invalid_argument);
}
