// divopt command line: solve, verify, simulate, curve, refine.
//
// One JSON config per run; all data goes to files under --out, stdout
// carries progress only, structured errors go to stderr as JSON.
// Exit codes: 0 ok, 1 verification fail, 2 config error, 3 missing
// artifact, 4 hypothesis unmet.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "divopt/curve.hpp"
#include "divopt/errors.hpp"
#include "divopt/hjb.hpp"
#include "divopt/model.hpp"
#include "divopt/refine.hpp"
#include "divopt/simulate.hpp"
#include "divopt/threshold.hpp"
#include "divopt/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitHypothesis = 4;

struct CliError {
  int code;
  std::string kind;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& kind, const std::string& message) {
  throw CliError{code, kind, message};
}

struct RunContext {
  json config;
  fs::path out_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> priority_override;
  json timings = json::object();
  std::vector<std::string> outputs;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(kExitConfig, "config", "cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(kExitConfig, "config", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) fail(kExitConfig, "config", "config root must be a JSON object");
  return j;
}

double num_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number())
    fail(kExitConfig, "config", std::string("missing numeric field: ") + key);
  return j[key].get<double>();
}

divopt::ModelParams parse_model(const json& cfg) {
  const bool has_model = cfg.contains("model");
  const bool has_cl = cfg.contains("cl");
  if (has_model == has_cl)
    fail(kExitConfig, "config", "exactly one of \"model\" or \"cl\" is required");
  try {
    if (has_model) {
      const json& m = cfg["model"];
      divopt::ModelParams p;
      p.mu = num_field(m, "mu");
      p.sigma = num_field(m, "sigma");
      p.b = num_field(m, "b");
      p.q = num_field(m, "q");
      p.validate();
      return p;
    }
    const json& m = cfg["cl"];
    divopt::CLPrimitives prim;
    prim.lambda = num_field(m, "lambda");
    prim.mu0 = num_field(m, "mu0");
    prim.sigma0_sq = num_field(m, "sigma0_sq");
    prim.theta = num_field(m, "theta");
    prim.gamma = num_field(m, "gamma");
    prim.principle = divopt::premium_principle_from_string(
        m.value("principle", std::string("expected-value")));
    return divopt::params_from_cl(prim, num_field(m, "q"));
  } catch (const CliError&) {
    throw;
  } catch (const std::exception& e) {
    fail(kExitConfig, "config", std::string("model: ") + e.what());
  }
}

divopt::ActionGrid parse_grid(const json& cfg) {
  if (!cfg.contains("grid"))
    fail(kExitConfig, "config", "this command needs a \"grid\" section");
  const json& g = cfg["grid"];
  try {
    return divopt::ActionGrid(g.at("retentions").get<std::vector<double>>(),
                              g.at("dividends").get<std::vector<double>>());
  } catch (const std::exception& e) {
    fail(kExitConfig, "config", std::string("grid: ") + e.what());
  }
}

divopt::IntervalBox parse_box(const json& cfg) {
  if (!cfg.contains("box"))
    fail(kExitConfig, "config", "this command needs a \"box\" section");
  const json& b = cfg["box"];
  divopt::IntervalBox box;
  box.a_lo = num_field(b, "a_lo");
  box.a_hi = num_field(b, "a_hi");
  box.c_lo = num_field(b, "c_lo");
  box.c_hi = num_field(b, "c_hi");
  try {
    box.validate();
  } catch (const std::exception& e) {
    fail(kExitConfig, "config", std::string("box: ") + e.what());
  }
  return box;
}

divopt::SolverConfig parse_solver(const RunContext& ctx, const divopt::ModelParams& p,
                                  const divopt::ActionGrid& grid) {
  divopt::SolverConfig cfg = divopt::SolverConfig::defaults(p, grid);
  if (ctx.config.contains("solver")) {
    const json& s = ctx.config["solver"];
    if (s.contains("x_max")) cfg.x_max = s["x_max"].get<double>();
    if (s.contains("coarse_points")) cfg.coarse_points = s["coarse_points"].get<int>();
    if (s.contains("refine_tol")) cfg.refine_tol = s["refine_tol"].get<double>();
    if (s.contains("delta_tol")) cfg.delta_tol = s["delta_tol"].get<double>();
    if (s.contains("inf_threshold_M")) cfg.inf_threshold_M = s["inf_threshold_M"].get<double>();
    if (s.contains("priority"))
      cfg.priority = divopt::priority_from_string(s["priority"].get<std::string>());
  }
  if (ctx.priority_override)
    cfg.priority = divopt::priority_from_string(*ctx.priority_override);
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    fail(kExitConfig, "config", std::string("solver: ") + e.what());
  }
  return cfg;
}

divopt::SimConfig parse_sim(const RunContext& ctx) {
  divopt::SimConfig cfg;
  if (ctx.config.contains("sim")) {
    const json& s = ctx.config["sim"];
    if (s.contains("dt")) cfg.dt = s["dt"].get<double>();
    if (s.contains("n_paths")) cfg.n_paths = s["n_paths"].get<long>();
    if (s.contains("horizon_eps")) cfg.horizon_eps = s["horizon_eps"].get<double>();
    if (s.contains("seed")) cfg.seed = s["seed"].get<std::uint64_t>();
    if (s.contains("antithetic")) cfg.antithetic = s["antithetic"].get<bool>();
    if (s.contains("log_paths")) cfg.log_paths = s["log_paths"].get<long>();
  }
  if (ctx.seed_override) cfg.seed = *ctx.seed_override;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    fail(kExitConfig, "config", std::string("sim: ") + e.what());
  }
  return cfg;
}

void atomic_write(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(kExitConfig, "io", "cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

void write_output(RunContext& ctx, const std::string& name, const std::string& content) {
  fs::create_directories(ctx.out_dir);
  atomic_write(ctx.out_dir / name, content);
  ctx.outputs.push_back(name);
}

void write_manifest(RunContext& ctx, const std::string& command) {
  json manifest;
  manifest["tool"] = "divopt";
  manifest["version"] = divopt::kVersion;
  manifest["command"] = command;
  manifest["config"] = ctx.config;
  if (ctx.seed_override) manifest["seed_override"] = *ctx.seed_override;
  if (ctx.priority_override) manifest["priority_override"] = *ctx.priority_override;
  manifest["outputs"] = ctx.outputs;
  manifest["timings"] = ctx.timings;
  atomic_write(ctx.out_dir / "manifest.json", manifest.dump(2) + "\n");
}

class Stopwatch {
 public:
  explicit Stopwatch(RunContext& ctx, std::string label)
      : ctx_(ctx), label_(std::move(label)), start_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    const auto end = std::chrono::steady_clock::now();
    ctx_.timings[label_] =
        std::chrono::duration_cast<std::chrono::microseconds>(end - start_).count() / 1e6;
  }

 private:
  RunContext& ctx_;
  std::string label_;
  std::chrono::steady_clock::time_point start_;
};

std::string fmt17(double v) {
  if (v == divopt::kInf) return "inf";
  if (v == -divopt::kInf) return "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- solve ---

std::string values_csv(const divopt::ThresholdSolution& sol, const json& outputs_cfg) {
  double x_hi = outputs_cfg.value("values_x_max", 0.0);
  if (x_hi <= 0.0) {
    x_hi = 10.0;
    for (double t : sol.finite_thresholds()) x_hi = std::max(x_hi, 1.25 * t);
  }
  const int points = outputs_cfg.value("values_points", 401);
  std::ostringstream os;
  os << "x,i,j,a,c,w\n";
  for (int k = 0; k < points; ++k) {
    const double x = x_hi * k / (points - 1);
    for (int i = 0; i < sol.m(); ++i)
      for (int j = 0; j < sol.n(); ++j)
        os << fmt17(x) << ',' << i << ',' << j << ',' << fmt17(sol.grid.retentions[i]) << ','
           << fmt17(sol.grid.dividends[j]) << ',' << fmt17(sol.value(x, i, j)) << '\n';
  }
  return os.str();
}

int cmd_solve(RunContext& ctx) {
  const divopt::ModelParams p = parse_model(ctx.config);
  const divopt::ActionGrid grid = parse_grid(ctx.config);
  const divopt::SolverConfig cfg = parse_solver(ctx, p, grid);

  std::cout << "solving " << grid.m() << "x" << grid.n() << " grid (x_max=" << cfg.x_max
            << ")\n";
  divopt::ThresholdSolution sol;
  {
    Stopwatch sw(ctx, "solve");
    sol = divopt::solve_backward(p, grid, cfg);
  }
  {
    std::ostringstream os;
    divopt::write_thresholds_csv(os, sol);
    write_output(ctx, "thresholds.csv", os.str());
  }
  write_output(ctx, "values.csv",
               values_csv(sol, ctx.config.value("outputs", json::object())));
  write_manifest(ctx, "solve");
  std::cout << "wrote thresholds.csv, values.csv, manifest.json\n";
  return kExitOk;
}

// --------------------------------------------------------------- verify ---

divopt::ThresholdSolution load_solution(const RunContext& ctx, const std::string& solution_dir) {
  const fs::path dir(solution_dir);
  const fs::path csv = dir / "thresholds.csv";
  if (!fs::exists(csv)) fail(kExitMissing, "missing-artifact", "no thresholds.csv in " + dir.string());
  const divopt::ModelParams p = parse_model(ctx.config);
  const divopt::ActionGrid grid = parse_grid(ctx.config);
  divopt::SolverConfig cfg = divopt::SolverConfig::defaults(p, grid);
  std::ifstream in(csv);
  try {
    return divopt::read_thresholds_csv(in, p, grid, cfg);
  } catch (const std::exception& e) {
    fail(kExitConfig, "artifact", std::string("thresholds.csv: ") + e.what());
  }
}

int cmd_verify(RunContext& ctx, const std::string& solution_dir) {
  const divopt::ThresholdSolution sol = load_solution(ctx, solution_dir);
  divopt::ScanReport scan;
  divopt::BoundaryReport bound;
  divopt::ResidualReport res;
  {
    Stopwatch sw(ctx, "verify");
    scan = divopt::viscosity_scan(sol);
    bound = divopt::boundary_checks(sol);
    res = divopt::hjb_residuals(sol, divopt::default_sample_points(sol, 2000));
  }
  {
    std::ostringstream os;
    divopt::write_residuals_csv(os, res);
    write_output(ctx, "residuals.csv", os.str());
  }
  json rep;
  rep["viscosity"] = {{"pass", scan.pass},
                      {"max_positive_residual", scan.max_positive_residual},
                      {"tol_pos", scan.tol_pos},
                      {"worst_complementarity", scan.worst_complementarity},
                      {"worst_jump", scan.worst_jump},
                      {"samples", scan.samples}};
  rep["boundary"] = {{"pass", bound.pass()},
                     {"worst_zero", bound.worst_zero},
                     {"x_big", bound.x_big},
                     {"worst_tail_gap", bound.worst_tail_gap},
                     {"tail_bound", bound.tail_bound},
                     {"lipschitz_hat", bound.lipschitz_hat}};
  const bool pass = scan.pass && bound.pass();
  rep["pass"] = pass;
  write_output(ctx, "verify_report.json", rep.dump(2) + "\n");
  write_manifest(ctx, "verify");
  std::cout << (pass ? "verification PASS\n" : "verification FAIL\n");
  return pass ? kExitOk : kExitVerifyFail;
}

// ------------------------------------------------------------- simulate ---

int cmd_simulate(RunContext& ctx, const std::string& solution_dir) {
  const divopt::ThresholdSolution sol = load_solution(ctx, solution_dir);
  const divopt::SimConfig cfg = parse_sim(ctx);
  const json sim_cfg = ctx.config.value("sim", json::object());
  const double x0 = sim_cfg.value("x0", 1.0);
  const double a0 = sim_cfg.value("a0", sol.grid.retentions.front());
  const double c0 = sim_cfg.value("c0", sol.grid.dividends.front());

  std::cout << "simulating " << cfg.n_paths << " paths from x0=" << x0 << "\n";
  divopt::SimEstimate est;
  std::ostringstream events;
  try {
    Stopwatch sw(ctx, "simulate");
    est = divopt::simulate_strategy(sol.params, divopt::threshold_strategy(sol), x0, a0, c0,
                                    cfg, cfg.log_paths > 0 ? &events : nullptr);
  } catch (const divopt::contract_violation& e) {
    fail(kExitVerifyFail, "contract", e.what());
  }
  if (cfg.log_paths > 0) write_output(ctx, "events.csv", events.str());
  json out;
  out["mean"] = est.mean;
  out["stderr"] = est.std_error;
  out["stderr_degenerate"] = est.stderr_degenerate;
  out["n_paths"] = est.n_paths;
  out["ruin_fraction"] = est.ruin_fraction;
  out["t_max"] = est.t_max;
  out["tail_bound"] = est.tail_bound;
  out["seed"] = cfg.seed;
  out["dt"] = cfg.dt;
  out["x0"] = x0;
  out["a0"] = a0;
  out["c0"] = c0;
  write_output(ctx, "estimate.json", out.dump(2) + "\n");
  write_manifest(ctx, "simulate");
  std::cout << "mean=" << est.mean << " stderr=" << est.std_error << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- curve ---

int cmd_curve(RunContext& ctx) {
  const divopt::ModelParams p = parse_model(ctx.config);
  const divopt::IntervalBox box = parse_box(ctx.config);
  divopt::CurveConfig cfg;
  if (ctx.config.contains("curve")) {
    const json& c = ctx.config["curve"];
    if (c.contains("a_nodes")) cfg.a_nodes = c["a_nodes"].get<int>();
    if (c.contains("c_nodes")) cfg.c_nodes = c["c_nodes"].get<int>();
    if (c.contains("eps_bc")) cfg.eps_bc = c["eps_bc"].get<double>();
    if (c.contains("rk_refine_tol")) cfg.rk_refine_tol = c["rk_refine_tol"].get<double>();
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    fail(kExitConfig, "config", std::string("curve: ") + e.what());
  }

  divopt::CurveSolution curve;
  divopt::CurveOptReport opt;
  try {
    Stopwatch sw(ctx, "curve");
    curve = divopt::solve_curves(p, box, cfg);
    opt = divopt::verify_curve_optimality(curve, p, box);
  } catch (const divopt::hypothesis_error& e) {
    fail(kExitHypothesis, "hypothesis", e.what());
  }
  {
    std::ostringstream os;
    divopt::write_curves_csv(os, curve);
    write_output(ctx, "curves.csv", os.str());
  }
  json rep;
  rep["x_c"] = curve.x_c;
  rep["x_a"] = curve.x_a;
  rep["box"] = {{"a_lo", box.a_lo},
                {"a_hi_valid", curve.a_hi_valid},
                {"c_lo_valid", curve.c_lo_valid},
                {"c_hi", box.c_hi}};
  rep["conditions_met"] = opt.conditions_met;
  rep["unmet_reason"] = opt.unmet_reason;
  rep["inequalities_ok"] = opt.inequalities_ok;
  rep["worst_gen_at_zeta_A"] = opt.worst_gen_at_zeta_A;
  rep["worst_slope_at_zeta_C"] = opt.worst_slope_at_zeta_C;
  rep["worst_W_a"] = opt.worst_W_a;
  rep["worst_W_c"] = opt.worst_W_c;
  write_output(ctx, "curve_report.json", rep.dump(2) + "\n");
  write_manifest(ctx, "curve");
  std::cout << "x_c=" << curve.x_c << " x_a=" << curve.x_a << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- refine ---

int cmd_refine(RunContext& ctx) {
  const divopt::ModelParams p = parse_model(ctx.config);
  const divopt::IntervalBox box = parse_box(ctx.config);
  int levels = 4;
  divopt::RefinementPlan plan = divopt::RefinementPlan::defaults(box, levels);
  if (ctx.config.contains("refine")) {
    const json& r = ctx.config["refine"];
    if (r.contains("levels")) plan.levels = r["levels"].get<int>();
    if (r.contains("probe_x")) plan.probe_x = r["probe_x"].get<std::vector<double>>();
    if (r.contains("probe_a")) plan.probe_a = r["probe_a"].get<std::vector<double>>();
    if (r.contains("probe_c")) plan.probe_c = r["probe_c"].get<std::vector<double>>();
  }
  try {
    plan.validate();
  } catch (const std::exception& e) {
    fail(kExitConfig, "config", std::string("refine: ") + e.what());
  }

  divopt::RefinementReport rep;
  {
    Stopwatch sw(ctx, "refine");
    rep = divopt::run_refinement(p, plan);
  }
  {
    std::ostringstream os;
    divopt::write_gaps_csv(os, rep);
    write_output(ctx, "gaps.csv", os.str());
  }
  write_manifest(ctx, "refine");
  std::cout << (rep.monotone ? "refinement monotone\n" : "refinement NOT monotone\n");
  return rep.monotone ? kExitOk : kExitVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"threshold and free-boundary solver for ratcheted dividend payout with "
               "irreversible proportional reinsurance"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", solution_dir;
  std::uint64_t seed = 0;
  std::string priority;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub, bool needs_solution) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override sim.seed")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--priority", priority, "retention-first|dividend-first")
        ->check(CLI::IsMember({"retention-first", "dividend-first"}));
    if (needs_solution)
      sub->add_option("--solution", solution_dir, "directory with solved artifacts")->required();
  };

  CLI::App* solve = app.add_subcommand("solve", "compute optimal thresholds");
  CLI::App* verify = app.add_subcommand("verify", "check a solved artifact");
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo estimate under the solved strategy");
  CLI::App* curve = app.add_subcommand("curve", "closed-interval free-boundary curves");
  CLI::App* refine = app.add_subcommand("refine", "nested grid refinement study");
  add_common(solve, false);
  add_common(verify, true);
  add_common(simulate, true);
  add_common(curve, false);
  add_common(refine, false);

  CLI11_PARSE(app, argc, argv);

  RunContext ctx;
  try {
    ctx.config = load_config(config_path);
    ctx.out_dir = out_dir;
    if (seed_set) ctx.seed_override = seed;
    if (!priority.empty()) ctx.priority_override = priority;

    if (solve->parsed()) return cmd_solve(ctx);
    if (verify->parsed()) return cmd_verify(ctx, solution_dir);
    if (simulate->parsed()) return cmd_simulate(ctx, solution_dir);
    if (curve->parsed()) return cmd_curve(ctx);
    if (refine->parsed()) return cmd_refine(ctx);
    return kExitConfig;
  } catch (const CliError& e) {
    json err;
    err["error"] = {{"code", e.code}, {"kind", e.kind}, {"message", e.message}};
    std::cerr << err.dump() << "\n";
    return e.code;
  } catch (const divopt::hypothesis_error& e) {
    json err;
    err["error"] = {{"code", kExitHypothesis}, {"kind", "hypothesis"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return kExitHypothesis;
  } catch (const std::exception& e) {
    json err;
    err["error"] = {{"code", kExitConfig}, {"kind", "error"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return kExitConfig;
  }
}
