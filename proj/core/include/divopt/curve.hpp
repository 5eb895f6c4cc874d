#pragma once

#include <iosfwd>
#include <vector>

#include "divopt/model.hpp"

namespace divopt {

/// The four auxiliary ratios b^a_0, b^a_1, b^c_0, b^c_1 (and their x-partials
/// below). Evaluated in exponential-scaled form so no intermediate overflows.
struct BAux {
  double a0, a1, c0, c1;
};

BAux b_aux(const ModelParams& p, double x, double a, double c);
BAux b_aux_dx(const ModelParams& p, double x, double a, double c);
BAux b_aux_dxx(const ModelParams& p, double x, double a, double c);

/// Unique root x_c of d/dx b^c_0(., a_lo, c_hi). Requires the standing
/// hypothesis c_hi > q sigma^2 a_lo^2 / (2 (mu a_lo - b)), mu a_lo != b;
/// throws hypothesis_error otherwise.
double find_xc(const ModelParams& p, const IntervalBox& box);
double find_xc_at(const ModelParams& p, double a, double c);

/// Smallest scanned x where |d/dx b^a_0 / d/dx b^a_1| < eps_bc at
/// (a_lo, c_hi); the retention boundary condition is realized only
/// asymptotically, so this stands in for it.
double find_xa(const ModelParams& p, const IntervalBox& box, double eps_bc);
double find_xa_at(const ModelParams& p, double a, double c, double eps_bc);

enum class BigBKind { c0, c1, a0, a1 };

/// Extra context for nonzero boundary gauges M(a), N(c). Defaults (all
/// zero) correspond to the M == 0, N == 0 construction.
struct CurveMNContext {
  double m_exp = 0.0;       ///< M(a) exp(int b1^c)
  double n_exp = 0.0;       ///< N(c) exp(int b1^a)
  double dI_dzeta_c = 0.0;  ///< sensitivity of int b1^c to the boundary value
  double dI_dzeta_a = 0.0;
};

double big_B(const ModelParams& p, BigBKind which, double x, double a, double c,
             const CurveMNContext& ctx = {});

struct CurveConfig {
  int a_nodes = 17;           ///< odd; tabulation nodes in a
  int c_nodes = 33;           ///< odd; tabulation nodes in c
  int rk_base_mult = 4;       ///< RK4 substeps per tabulation interval at the coarsest level
  double rk_refine_tol = 1e-8;
  int rk_max_halvings = 8;
  double eps_bc = 1e-6;       ///< ratio tolerance defining x_a
  double shrink = 0.9;        ///< span kept after a validity abort

  void validate() const;
};

struct RayTabulation {
  std::vector<double> param;  ///< ray parameter (a or c) nodes, in integration order
  std::vector<double> zeta;   ///< boundary values at the nodes
  std::vector<double> slope;  ///< ODE right-hand side at the nodes
  bool aborted = false;
  double abort_at = 0.0;      ///< parameter value where validity failed
  double refine_gap = 0.0;    ///< relative change at the final step halving
  int halvings = 0;
};

/// Principal dividend-boundary ray: zeta^C(a_lo, .) integrated backward in c
/// from c_hi with zeta^C(a_lo, c_hi) = x_c. Step-halved RK4.
RayTabulation integrate_zeta_C(const ModelParams& p, const IntervalBox& box,
                               const CurveConfig& cfg);

/// Principal retention-boundary ray: zeta^A(., c_hi) integrated forward in a
/// from a_lo with zeta^A(a_lo, c_hi) = x_a.
RayTabulation integrate_zeta_A(const ModelParams& p, const IntervalBox& box,
                               const CurveConfig& cfg);

/// Free-boundary tabulation on the validity box found by greedy span
/// growth. regime: 0 = zeta^A binds (is smaller), 1 = zeta^C binds, 2 = tie.
struct CurveSolution {
  ModelParams params;
  IntervalBox box;       ///< requested box
  CurveConfig cfg;
  double x_c = 0.0;
  double x_a = 0.0;
  double a_hi_valid = 0.0;
  double c_lo_valid = 0.0;
  std::vector<double> a_nodes;
  std::vector<double> c_nodes;
  std::vector<double> zeta_A;  ///< [ia * c_nodes + ic]
  std::vector<double> zeta_C;
  std::vector<double> K;         ///< dividend-route K (composite Simpson), the primary table
  std::vector<double> K_route_A; ///< retention-route K with the induced edge gauge N(c)
  std::vector<double> n_edge;    ///< N(c) pinned by route agreement on the a_lo edge
  std::vector<int> regime;
  double k_route_mismatch = 0.0;  ///< worst |K_route_A - K| (regime stitching gap)

  // Fine ray tabulations backing the interpolators. The value function
  // multiplies its coefficient by e^{theta1 x}, so boundary positions feed
  // in at far higher resolution than the display grid.
  std::vector<double> c_fine;        ///< ascending, (c_nodes-1)*64 + 1 points
  std::vector<double> a_fine;        ///< ascending
  std::vector<double> zeta_C_fine;   ///< [ia * c_fine + k]
  std::vector<double> zeta_C_slope;  ///< d zeta^C / dc at the fine nodes
  std::vector<double> zeta_A_fine;   ///< [k * c_nodes + ic]
  std::vector<double> zeta_A_slope;  ///< d zeta^A / da at the fine nodes
  std::vector<double> p_fine;        ///< cum. int of b1^a along each c-column, [k * c_nodes + ic]

  int idx(int ia, int ic) const { return ia * static_cast<int>(c_nodes.size()) + ic; }
  double interp_zeta_A(double a, double c) const;
  double interp_zeta_C(double a, double c) const;
  bool inside(double a, double c) const;
};

CurveSolution solve_curves(const ModelParams& p, const IntervalBox& box,
                           const CurveConfig& cfg);

/// Fresh quadrature of the K integral at (a, c) along the binding regime's
/// tabulated boundary (composite Simpson, step-doubled until < 1e-8 relative).
double K_along_curve(const CurveSolution& curve, double a, double c);

/// Implicit-equation value -d/dx b0 / d/dx b1 at the binding boundary; the
/// independent check of the quadrature route.
double K_implicit(const CurveSolution& curve, double a, double c);

/// zeta-value function: the H piece below both boundaries, region-mapped
/// action coordinates above them.
double eval_W_curve(const CurveSolution& curve, double x, double a, double c);

struct CurveOptReport {
  bool conditions_met = false;   ///< epsilon-optimality sign conditions (M>0, N-sign)
  std::string unmet_reason;
  double worst_gen_at_zeta_A = 0.0;  ///< max L^{a,c}(W) just above zeta^A
  double worst_slope_at_zeta_C = 0.0;///< max (W_x - 1) at zeta^C
  double worst_W_a = 0.0;            ///< most negative W_a in the hold region
  double worst_W_c = 0.0;            ///< most positive W_c in the hold region
  double worst_K_residual = 0.0;     ///< K table vs implicit equation, relative
  bool k_table_consistent = false;
  double tol = 0.0;
  bool inequalities_ok = false;
};

CurveOptReport verify_curve_optimality(const CurveSolution& curve, const ModelParams& p,
                                       const IntervalBox& box);

/// Columns: a,c,zeta_A,zeta_C,K,regime.
void write_curves_csv(std::ostream& os, const CurveSolution& curve);

}  // namespace divopt
