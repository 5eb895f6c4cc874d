#include "divopt/model.hpp"

#include <cmath>
#include <stdexcept>

namespace divopt {

void ModelParams::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("ModelParams: sigma must be > 0");
  if (!(q > 0.0)) throw std::invalid_argument("ModelParams: q must be > 0");
  if (!std::isfinite(mu) || !std::isfinite(b) || !std::isfinite(sigma) || !std::isfinite(q))
    throw std::invalid_argument("ModelParams: parameters must be finite");
}

const char* to_string(PremiumPrinciple p) {
  switch (p) {
    case PremiumPrinciple::ExpectedValue: return "expected-value";
    case PremiumPrinciple::StandardDeviation: return "standard-deviation";
    case PremiumPrinciple::ModifiedVariance: return "modified-variance";
  }
  return "?";
}

PremiumPrinciple premium_principle_from_string(const std::string& s) {
  if (s == "expected-value") return PremiumPrinciple::ExpectedValue;
  if (s == "standard-deviation") return PremiumPrinciple::StandardDeviation;
  if (s == "modified-variance") return PremiumPrinciple::ModifiedVariance;
  throw std::invalid_argument("unknown premium principle: " + s);
}

void CLPrimitives::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("CLPrimitives: lambda must be > 0");
  if (!(mu0 > 0.0)) throw std::invalid_argument("CLPrimitives: mu0 must be > 0");
  if (!(sigma0_sq > 0.0)) throw std::invalid_argument("CLPrimitives: sigma0_sq must be > 0");
  if (!(theta > 0.0)) throw std::invalid_argument("CLPrimitives: theta must be > 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("CLPrimitives: gamma must be > 0");
}

ModelParams params_from_cl(const CLPrimitives& prim, double q) {
  prim.validate();
  if (!(q > 0.0)) throw std::invalid_argument("params_from_cl: q must be > 0");
  ModelParams p;
  p.q = q;
  p.sigma = std::sqrt(prim.lambda * prim.sigma0_sq);
  const double load = prim.theta - prim.gamma;
  switch (prim.principle) {
    case PremiumPrinciple::ExpectedValue:
      p.mu = prim.theta * prim.lambda * prim.mu0;
      p.b = load * prim.lambda * prim.mu0;
      break;
    case PremiumPrinciple::StandardDeviation:
      p.mu = prim.theta * p.sigma;
      p.b = load * p.sigma;
      break;
    case PremiumPrinciple::ModifiedVariance:
      p.mu = prim.theta * prim.sigma0_sq / prim.mu0;
      p.b = load * prim.sigma0_sq / prim.mu0;
      break;
  }
  p.validate();
  return p;
}

ActionGrid::ActionGrid(std::vector<double> as, std::vector<double> cs)
    : retentions(std::move(as)), dividends(std::move(cs)) {
  validate();
}

void ActionGrid::validate() const {
  if (retentions.empty()) throw std::invalid_argument("ActionGrid: need at least one retention");
  if (dividends.empty()) throw std::invalid_argument("ActionGrid: need at least one dividend rate");
  for (std::size_t i = 0; i < retentions.size(); ++i) {
    const double a = retentions[i];
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("ActionGrid: retentions must lie in [0,1]");
    if (i > 0 && !(a < retentions[i - 1]))
      throw std::invalid_argument("ActionGrid: retentions must be strictly decreasing");
  }
  for (std::size_t j = 0; j < dividends.size(); ++j) {
    const double c = dividends[j];
    if (!(c >= 0.0)) throw std::invalid_argument("ActionGrid: dividend rates must be >= 0");
    if (j > 0 && !(c > dividends[j - 1]))
      throw std::invalid_argument("ActionGrid: dividend rates must be strictly increasing");
  }
}

void IntervalBox::validate() const {
  if (!(0.0 <= a_lo && a_lo < a_hi && a_hi <= 1.0))
    throw std::invalid_argument("IntervalBox: need 0 <= a_lo < a_hi <= 1");
  if (!(0.0 <= c_lo && c_lo < c_hi))
    throw std::invalid_argument("IntervalBox: need 0 <= c_lo < c_hi");
}

namespace {

struct ThetaCore {
  double s;      // sigma^2 a^2
  double delta;  // b + c - mu a
  double disc;   // sqrt(delta^2 + 2 q s), always > |delta|
};

ThetaCore theta_core(const ModelParams& p, double a, double c) {
  if (!(a > 0.0))
    throw degenerate_diffusion_error("theta roots undefined at a = 0 (quadratic collapses)");
  ThetaCore t;
  t.s = p.sigma * p.sigma * a * a;
  t.delta = p.b + c - p.mu * a;
  t.disc = std::sqrt(t.delta * t.delta + 2.0 * p.q * t.s);
  return t;
}

}  // namespace

ThetaPair theta_roots(const ModelParams& p, double a, double c) {
  const ThetaCore t = theta_core(p, a, c);
  // Evaluate the non-cancelling root directly and pair the other through
  // the product -2q/s, so both carry full precision for any sign of delta.
  if (t.delta >= 0.0) {
    const double theta1 = (t.delta + t.disc) / t.s;
    return ThetaPair{theta1, -2.0 * p.q / (t.s * theta1)};
  }
  const double theta2 = (t.delta - t.disc) / t.s;
  return ThetaPair{-2.0 * p.q / (t.s * theta2), theta2};
}

ThetaPartials theta_partials(const ModelParams& p, double a, double c) {
  const ThetaCore t = theta_core(p, a, c);
  ThetaPartials d;
  const double ratio = t.delta / t.disc;  // |ratio| < 1
  d.d1_dc = (1.0 + ratio) / t.s;
  d.d2_dc = (1.0 - ratio) / t.s;

  // bbar = b + c; P = (mu a - bbar)(mu a - 2 bbar) + 2 q sigma^2 a^2
  const double bbar = p.b + c;
  const double mu_a = p.mu * a;
  const double P = (mu_a - bbar) * (mu_a - 2.0 * bbar) + 2.0 * p.q * p.sigma * p.sigma * a * a;
  const double s2a3 = p.sigma * p.sigma * a * a * a;
  d.d2_da = (mu_a - 2.0 * bbar + P / t.disc) / s2a3;
  d.d1_da = -(2.0 * bbar - mu_a + P / t.disc) / s2a3;
  return d;
}

double singleton_value(const ModelParams& p, double a, double c, double x) {
  if (x < 0.0) throw std::domain_error("singleton_value: x must be >= 0");
  const ThetaPair th = theta_roots(p, a, c);
  return c / p.q * (-std::expm1(th.theta2 * x));
}

double zero_retention_value(const ModelParams& p, double c, double x) {
  if (x < 0.0) throw std::domain_error("zero_retention_value: x must be >= 0");
  if (!(c >= 0.0)) throw std::invalid_argument("zero_retention_value: c must be >= 0");
  const double drain = p.b + c;
  if (drain <= 0.0) return c / p.q;  // reserve never decreases, no ruin
  return c / p.q * (-std::expm1(-p.q * x / drain));
}

}  // namespace divopt
