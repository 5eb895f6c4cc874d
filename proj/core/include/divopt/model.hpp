#pragma once

#include <string>
#include <vector>

#include "divopt/errors.hpp"

namespace divopt {

/// Parameters of the Brownian reserve model
///   dX = [mu*A(t) - b] dt + sigma*A(t) dW - C(t) dt
/// with discount rate q. mu and b may take any real sign; conditions that
/// need a particular sign are checked where they are used.
struct ModelParams {
  double mu = 0.0;     ///< drift per retained unit (currency/time)
  double sigma = 1.0;  ///< volatility per retained unit (currency/sqrt(time)), > 0
  double b = 0.0;      ///< constant drift drag (currency/time)
  double q = 0.1;      ///< discount rate (1/time), > 0

  void validate() const;
};

enum class PremiumPrinciple { ExpectedValue, StandardDeviation, ModifiedVariance };

const char* to_string(PremiumPrinciple p);
PremiumPrinciple premium_principle_from_string(const std::string& s);

/// Classical risk-model primitives from which a diffusion ModelParams can
/// be derived under one of three premium principles.
struct CLPrimitives {
  double lambda = 1.0;     ///< claim intensity (1/time), > 0
  double mu0 = 1.0;        ///< mean claim size, > 0
  double sigma0_sq = 1.0;  ///< second moment of claim size, > 0
  double theta = 1.0;      ///< reinsurer safety loading, > 0
  double gamma = 1.0;      ///< insurer safety loading, > 0
  PremiumPrinciple principle = PremiumPrinciple::ExpectedValue;

  void validate() const;
};

/// Map classical primitives to diffusion parameters. q is supplied by the
/// caller; it is not derived from the primitives.
ModelParams params_from_cl(const CLPrimitives& prim, double q);

/// Finite action sets: retentions a_1 > ... > a_m in [0,1] and dividend
/// rates c_1 < ... < c_n >= 0. Index 0 is the largest retention and the
/// smallest dividend rate.
struct ActionGrid {
  std::vector<double> retentions;
  std::vector<double> dividends;

  ActionGrid() = default;
  ActionGrid(std::vector<double> as, std::vector<double> cs);

  int m() const { return static_cast<int>(retentions.size()); }
  int n() const { return static_cast<int>(dividends.size()); }
  double c_max() const { return dividends.back(); }

  void validate() const;
};

/// Closed action intervals [a_lo, a_hi] x [c_lo, c_hi].
struct IntervalBox {
  double a_lo = 0.0;
  double a_hi = 1.0;
  double c_lo = 0.0;
  double c_hi = 1.0;

  void validate() const;
};

/// Roots of (sigma^2 a^2 / 2) t^2 + (mu a - b - c) t - q = 0.
/// Always theta2 < 0 < theta1; theta1*theta2 = -2q/(sigma^2 a^2).
struct ThetaPair {
  double theta1;
  double theta2;
  double omega() const { return theta1 - theta2; }
};

struct ThetaPartials {
  double d1_da;  ///< d theta1 / d a
  double d2_da;  ///< d theta2 / d a
  double d1_dc;  ///< d theta1 / d c
  double d2_dc;  ///< d theta2 / d c
};

/// a > 0 required; a = 0 throws degenerate_diffusion_error.
ThetaPair theta_roots(const ModelParams& p, double a, double c);
ThetaPartials theta_partials(const ModelParams& p, double a, double c);

/// Value of holding (a, c) forever: (c/q) (1 - e^{theta2(a,c) x}).
/// Requires x >= 0 and a > 0.
double singleton_value(const ModelParams& p, double a, double c, double x);

/// Degenerate a = 0 payoff. The reserve moves deterministically at rate
/// -(b+c): ruin at x/(b+c) when b+c > 0, never otherwise.
double zero_retention_value(const ModelParams& p, double c, double x);

}  // namespace divopt
