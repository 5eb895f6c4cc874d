#include "divopt/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "divopt/errors.hpp"
#include "divopt/rng.hpp"

namespace divopt {

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("SimConfig: dt must be > 0");
  if (n_paths < 1) throw std::invalid_argument("SimConfig: n_paths must be >= 1");
  if (!(horizon_eps > 0.0 && horizon_eps < 1.0))
    throw std::invalid_argument("SimConfig: horizon_eps must lie in (0,1)");
  if (antithetic && (n_paths % 2) != 0)
    throw std::invalid_argument("SimConfig: antithetic pairing needs an even n_paths");
}

Strategy constant_strategy(double a, double c) {
  if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("constant_strategy: a outside [0,1]");
  if (!(c >= 0.0)) throw std::invalid_argument("constant_strategy: c must be >= 0");
  Strategy s;
  s.c_bar = c;
  s.start = [a, c](double, double, double) -> PathController {
    return [a, c](double) { return ControlSegment{a, c, kInf}; };
  };
  return s;
}

Strategy threshold_strategy(const ThresholdSolution& sol) {
  Strategy s;
  s.c_bar = sol.grid.c_max();
  const ThresholdSolution* ps = &sol;
  s.start = [ps](double, double a0, double c0) -> PathController {
    // locate the starting cell: largest grid retention <= a0, smallest
    // grid dividend >= c0
    int i = 0;
    while (i < ps->m() - 1 && ps->grid.retentions[i] > a0 + 1e-12) ++i;
    int j = ps->n() - 1;
    while (j > 0 && ps->grid.dividends[j - 1] >= c0 - 1e-12) --j;
    return [ps, i, j](double x) mutable {
      for (;;) {
        const double y = ps->y(i, j);
        const double z = ps->z(i, j);
        const double t = std::min(y, z);
        if (x < t)
          return ControlSegment{ps->grid.retentions[i], ps->grid.dividends[j], t};
        if (y < z)
          ++i;
        else if (z < y)
          ++j;
        else {
          ++i;
          ++j;
        }
      }
    };
  };
  return s;
}

SimEstimate simulate_strategy(const ModelParams& p, const Strategy& strategy, double x0,
                              double a0, double c0, const SimConfig& cfg,
                              std::ostream* event_log) {
  p.validate();
  cfg.validate();
  if (x0 < 0.0) throw std::domain_error("simulate_strategy: x0 must be >= 0");
  if (!strategy.start) throw std::invalid_argument("simulate_strategy: empty strategy");

  const double t_max = -std::log(cfg.horizon_eps) / p.q;
  const long n_steps = static_cast<long>(std::ceil(t_max / cfg.dt));
  const double rho = std::exp(-p.q * cfg.dt);
  const double pay_scale = (1.0 - rho) / p.q;
  const double sqdt = std::sqrt(cfg.dt);
  const double payoff_cap = strategy.c_bar / p.q * (1.0 + 1e-9) + 1e-12;

  if (event_log && cfg.log_paths > 0) *event_log << "t,x,a,c,event\n";
  auto log_event = [&](long path, double t, double x, double a, double c, const char* what) {
    if (event_log && path < cfg.log_paths) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%s\n", t, x, a, c, what);
      *event_log << buf;
    }
  };

  ZigguratNormal normal;

  // Welford over per-sample payoffs (pair means under antithetic), always
  // accumulated in path-index order.
  double mean = 0.0, m2 = 0.0;
  long n_samples = 0;
  long ruined_paths = 0;
  double pair_sum = 0.0;

  for (long path = 0; path < cfg.n_paths; ++path) {
    const std::uint64_t stream = cfg.antithetic ? static_cast<std::uint64_t>(path / 2)
                                                : static_cast<std::uint64_t>(path);
    const double sign = (cfg.antithetic && (path & 1)) ? -1.0 : 1.0;
    Xoshiro256pp rng(cfg.seed, stream);

    PathController controller = strategy.start(x0, a0, c0);
    double x = x0;
    double df = 1.0;
    double pay = 0.0;
    double prev_a = a0, prev_c = c0;
    bool ruined = x < 0.0;
    long steps_left = n_steps;
    bool first_segment = true;

    while (!ruined && steps_left > 0) {
      const ControlSegment seg = controller(x);
      if (seg.retention > prev_a + 1e-12 || seg.dividend < prev_c - 1e-12)
        throw contract_violation("strategy violated the ratchet constraints");
      prev_a = seg.retention;
      prev_c = seg.dividend;
      log_event(path, (n_steps - steps_left) * cfg.dt, x, seg.retention, seg.dividend,
                first_segment ? "start" : "switch");
      first_segment = false;

      const double drift = (p.mu * seg.retention - p.b - seg.dividend) * cfg.dt;
      const double vol = p.sigma * seg.retention * sqdt * sign;
      const double pay_coef = seg.dividend * pay_scale;
      const double trigger = seg.valid_below;

      while (steps_left > 0) {
        pay += pay_coef * df;
        df *= rho;
        x += drift + vol * normal(rng);
        --steps_left;
        if (x < 0.0) {
          ruined = true;
          break;
        }
        if (x >= trigger) break;  // re-query the controller
      }
    }

    // hard payoff bound: a discounted stream at rate <= c_bar can never
    // exceed c_bar / q
    if (pay > payoff_cap)
      throw std::logic_error("simulate_strategy: per-path payoff exceeded c_bar/q");
    log_event(path, (n_steps - steps_left) * cfg.dt, x, prev_a, prev_c,
              ruined ? "ruin" : "horizon");

    if (ruined) ++ruined_paths;

    if (cfg.antithetic) {
      if ((path & 1) == 0) {
        pair_sum = pay;
      } else {
        const double sample = 0.5 * (pair_sum + pay);
        ++n_samples;
        const double d = sample - mean;
        mean += d / static_cast<double>(n_samples);
        m2 += d * (sample - mean);
      }
    } else {
      ++n_samples;
      const double d = pay - mean;
      mean += d / static_cast<double>(n_samples);
      m2 += d * (pay - mean);
    }
  }

  SimEstimate est;
  est.mean = mean;
  est.n_paths = cfg.n_paths;
  est.ruin_fraction = static_cast<double>(ruined_paths) / static_cast<double>(cfg.n_paths);
  est.t_max = t_max;
  est.tail_bound = cfg.horizon_eps * strategy.c_bar / p.q;
  if (n_samples > 1) {
    est.std_error = std::sqrt(m2 / (static_cast<double>(n_samples) *
                                    static_cast<double>(n_samples - 1)));
  } else {
    est.std_error = 0.0;
    est.stderr_degenerate = true;
  }
  return est;
}

}  // namespace divopt
