// lqgtp: command-line front end.
//
// Exit codes: 0 pass, 1 check/verification failure, 2 configuration error,
// 3 numeric/solver failure.

#include "lqg_turnpike/lqg_turnpike.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lqgtp;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct RunConfig {
  std::string spec_path;
  std::string spec_json;
  std::string example;
  std::size_t N = 2;
  std::size_t d = 1;
  std::vector<std::string> params;
  std::optional<double> T;
  std::optional<std::size_t> K;
  std::uint64_t seed = 12345;
  std::size_t paths = 10000;
  double h = 1e-3;
  std::string out;
  std::vector<double> horizons;
  bool uniform_scan = false;
  std::vector<std::size_t> scan_N{2, 4, 8, 16, 32};
  bool paper_literal_F0 = false;
  bool waive = false;
  bool strict = false;
  bool shift_mu0 = false;
  bool independent_noise = false;
};

F0Mode f0_mode(const RunConfig& c) { return c.paper_literal_F0 ? F0Mode::paper_literal : F0Mode::per_player; }

std::map<std::string, double> parse_params(const std::vector<std::string>& kvs) {
  std::map<std::string, double> out;
  for (const auto& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw SpecError("--params expects k=v, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(val, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != val.size() || val.empty()) throw SpecError("--params value for '" + key + "' is not a number");
    out[key] = v;
  }
  return out;
}

GameSpec example_spec(const std::string& name, std::size_t N, std::size_t d, const std::vector<std::string>& params) {
  const auto prm = parse_example_params(parse_params(params));
  if (name == "fixture-a") {
    if (!params.empty()) throw SpecError("fixture-a takes no parameters");
    return fixture_a();
  }
  if (name == "symmetric") return build_example(ExampleKind::symmetric, N, d, prm);
  if (name == "consensus") return build_example(ExampleKind::consensus, N, d, prm);
  throw SpecError("unknown example '" + name + "' (fixture-a, symmetric, consensus)");
}

nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SpecError("cannot parse " + what + ": " + e.what());
  }
}

GameSpec resolve_spec(const RunConfig& c) {
  const int sources = !c.spec_path.empty() + !c.spec_json.empty() + !c.example.empty();
  if (sources != 1) throw SpecError("give exactly one of --spec, --spec-json, --example");
  if (!c.example.empty()) return example_spec(c.example, c.N, c.d, c.params);
  if (!c.spec_json.empty()) return spec_from_json(parse_json_text(c.spec_json, "--spec-json"));
  std::ifstream in(c.spec_path);
  if (!in) throw SpecError("cannot read spec file '" + c.spec_path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return spec_from_json(parse_json_text(ss.str(), c.spec_path));
}

fs::path output_dir(const RunConfig& c) {
  std::string dir = c.out;
  if (dir.empty()) {
    const char* env = std::getenv("LQGTP_OUT");
    dir = (env && *env) ? env : ".";
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw SpecError("cannot create output directory '" + dir + "'");
  return fs::path(dir);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw SpecError("cannot write '" + p.string() + "'");
  out << text;
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

TimeGrid grid_for(const RunConfig& c, double default_T) {
  const double T = c.T.value_or(default_T);
  if (!(T > 0.0)) throw SpecError("--T must be positive");
  if (!(c.h > 0.0)) throw SpecError("--h must be positive");
  const std::size_t K = c.K ? *c.K : static_cast<std::size_t>(std::llround(T / c.h));
  return TimeGrid(T, K);
}

/// Structural gate shared by the solving commands. Returns false (after
/// writing assumptions.json) when the game spec is rejected and not waived.
bool structural_gate(const GameSpec& spec, const RunConfig& c, const fs::path& out) {
  const auto rep = check_assumptions(spec);
  const auto* rec = rep.find("structural_spd");
  if (rec && rec->status != CheckStatus::pass && !c.waive) {
    write_json(out / "assumptions.json", report_to_json(rep, c.strict));
    std::cerr << "assumption failure: " << rec->message << "\n";
    return false;
  }
  return true;
}

LambdaPathData lambda_path(const FiniteRiccatiSolution& fin) {
  LambdaPathData lp;
  lp.T = fin.grid.T;
  for (std::size_t k = 0; k <= fin.grid.K; ++k) lp.t.push_back(fin.grid.t(k));
  for (const auto& p : fin.players) lp.Lambda.push_back(p.Lambda);
  return lp;
}

std::size_t profile_samples(std::size_t K) {
  for (std::size_t P = std::min<std::size_t>(400, K); P >= 1; --P)
    if (K % P == 0) return P;
  return 1;
}

// ---------------------------------------------------------------------------

int cmd_check(const RunConfig& c) {
  const auto spec = resolve_spec(c);
  const auto out = output_dir(c);
  auto rep = check_assumptions(spec);
  const auto* rec = rep.find("structural_spd");
  if (rec && rec->status == CheckStatus::pass) {
    const auto erg = solve_ergodic_system(spec, f0_mode(c));
    const auto fin = solve_finite_system(spec, grid_for(c, 10.0), f0_mode(c));
    const auto lp = lambda_path(fin);
    rep = check_assumptions(spec, &erg, &lp);
  }
  auto j = report_to_json(rep, c.strict);
  j["waived"] = c.waive;
  write_json(out / "assumptions.json", j);
  for (const auto& r : rep.records)
    std::cout << r.name << ": " << status_name(r.status) << (r.gating ? " (gating)" : "") << "  " << r.message
              << "\n";
  const bool ok = rep.passed(c.strict);
  if (!ok && c.waive) std::cout << "failures waived\n";
  return (ok || c.waive) ? kExitPass : kExitFail;
}

int cmd_solve_finite(const RunConfig& c) {
  const auto spec = resolve_spec(c);
  const auto out = output_dir(c);
  if (!structural_gate(spec, c, out)) return kExitFail;
  const auto fin = solve_finite_system(spec, grid_for(c, 10.0), f0_mode(c));
  std::ofstream csv(out / "finite.csv", std::ios::binary);
  if (!csv) throw SpecError("cannot write finite.csv");
  write_finite_csv(fin, csv);
  auto man = finite_manifest(fin, spec, "finite.csv");
  double hjb_in = 0.0, hjb_end = 0.0;
  const Vector x = Vector::Constant(spec.dim(), 0.5);
  for (std::size_t i = 0; i < spec.N; ++i) {
    for (double f : {0.25, 0.5, 0.75}) {
      const auto k = static_cast<std::size_t>(std::llround(f * static_cast<double>(fin.grid.K)));
      hjb_in = std::max(hjb_in, std::abs(hjb_residual_at_node(fin, spec, i, k, x)));
    }
    for (std::size_t k : {std::size_t{0}, fin.grid.K})
      hjb_end = std::max(hjb_end, std::abs(hjb_residual_at_node(fin, spec, i, k, x)));
  }
  man["certificates"] = {{"hjb_interior", hjb_in}, {"hjb_endpoints", hjb_end}};
  write_json(out / "finite.json", man);
  std::cout << "wrote " << (out / "finite.csv").string() << " and finite.json\n";
  return kExitPass;
}

int cmd_solve_ergodic(const RunConfig& c) {
  const auto spec = resolve_spec(c);
  const auto out = output_dir(c);
  if (!structural_gate(spec, c, out)) return kExitFail;
  const auto erg = solve_ergodic_system(spec, f0_mode(c));
  write_json(out / "ergodic.json", ergodic_to_json(erg));
  for (std::size_t i = 0; i < erg.N; ++i)
    std::cout << "player " << i << ": c = " << std::setprecision(12) << erg.players[i].c << "\n";
  return kExitPass;
}

int cmd_simulate(const RunConfig& c) {
  const auto spec = resolve_spec(c);
  const auto out = output_dir(c);
  if (!structural_gate(spec, c, out)) return kExitFail;
  const double T = c.T.value_or(10.0);
  const auto plan = NoisePlan::over(T, c.h, c.paths, c.seed);
  const auto fin = solve_finite_system(spec, TimeGrid(T, plan.steps), f0_mode(c));
  auto law = InitialLaw::from_spec(spec);
  if (c.shift_mu0)
    for (auto& m : law.mean) m.array() += 1.0;
  const auto ens = simulate_finite(fin, spec, plan, law);
  std::ofstream csv(out / "simulation.csv", std::ios::binary);
  if (!csv) throw SpecError("cannot write simulation.csv");
  write_summary_csv(ens, spec, csv);
  write_json(out / "simulation.json", {{"T", T},
                                       {"h", plan.h},
                                       {"M", plan.M},
                                       {"seed", plan.seed},
                                       {"records", ens.records()},
                                       {"shift_mu0", c.shift_mu0},
                                       {"policy", ens.provenance},
                                       {"csv", "simulation.csv"}});
  std::cout << "simulated " << plan.M << " paths, " << ens.records() << " records\n";
  return kExitPass;
}

int cmd_turnpike(const RunConfig& c) {
  const auto spec = resolve_spec(c);
  const auto out = output_dir(c);
  if (!structural_gate(spec, c, out)) return kExitFail;
  const auto grid = grid_for(c, 10.0);
  const auto erg = solve_ergodic_system(spec, f0_mode(c));
  const auto fin = solve_finite_system(spec, grid, f0_mode(c));

  DeviationOptions opt;
  opt.samples = profile_samples(grid.K);
  opt.monte_carlo = c.paths > 0;
  opt.independent_noise = c.independent_noise;
  if (opt.monte_carlo) {
    opt.plan.seed = c.seed;
    opt.plan.M = c.paths;
    opt.plan.h = grid.h();
    opt.plan.steps = grid.K;
  }
  const auto prof = deviation_profile(fin, erg, spec, opt);
  const auto fits = fit_profile(prof, erg);
  {
    std::ofstream csv(out / "profiles.csv", std::ios::binary);
    if (!csv) throw SpecError("cannot write profiles.csv");
    write_profiles_csv(prof, csv);
  }
  write_text(out / "plots.txt", plot_script(prof, "profiles.csv"));

  nlohmann::json rep;
  rep["profiles"] = "profiles.csv";
  rep["plot_script"] = "plots.txt";
  rep["T"] = grid.T;
  rep["K"] = grid.K;
  rep["monte_carlo"] = opt.monte_carlo ? nlohmann::json{{"M", c.paths}, {"seed", c.seed}, {"h", grid.h()}}
                                       : nlohmann::json();
  rep["fits"] = fits_to_json(fits);
  rep["deviation_system_residual"] = deviation_system_residual(fin, erg, spec);

  std::vector<double> horizons = c.horizons;
  if (horizons.empty()) horizons = {grid.T, 2.0 * grid.T, 4.0 * grid.T};
  nlohmann::json vs = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.N; ++i) {
    nlohmann::json entry;
    entry["player"] = i;
    entry["x"] = vector_to_json(Vector::Zero(spec.dim()));
    entry["series"] = value_series_to_json(
        value_ergodicity(spec, i, Vector::Zero(spec.dim()), horizons, grid.h(), f0_mode(c)));
    vs.push_back(std::move(entry));
  }
  rep["value_series"] = vs;

  if (c.uniform_scan) {
    if (c.example != "symmetric" && c.example != "consensus")
      throw SpecError("--uniform-scan needs --example symmetric or consensus");
    const auto params = c.params;
    const std::string name = c.example;
    const std::size_t d = c.d;
    const auto scan = uniform_scan([&](std::size_t n) { return example_spec(name, n, d, params); }, c.scan_N, grid.T,
                                   grid.K, opt.samples);
    rep["uniform_scan"] = scan_to_json(scan);
    for (const auto& [q, band] : scan.lambda_band) std::cout << "scan " << q << ": lambda band " << band << "\n";
  } else {
    rep["uniform_scan"] = nullptr;
  }
  write_json(out / "turnpike.json", rep);
  for (const auto& f : fits)
    std::cout << f.quantity << (f.player >= 0 ? std::to_string(f.player) : std::string()) << ": "
              << fit_status_name(f.fit.status) << " " << branch_name(f.fit.branch) << " lambdahat=" << f.fit.lambdahat
              << " Khat=" << f.fit.Khat << "\n";
  return kExitPass;
}

int cmd_verify(const RunConfig& c) {
  const auto spec = resolve_spec(c);
  const auto out = output_dir(c);
  SuiteConfig cfg;
  const auto grid = grid_for(c, 5.0);
  cfg.T = grid.T;
  cfg.K = grid.K;
  cfg.M = c.paths;
  cfg.seed = c.seed;
  cfg.f0_mode = f0_mode(c);
  cfg.shift_mu0 = c.shift_mu0;
  cfg.waive_assumptions = c.waive;
  cfg.strict = c.strict;
  const auto res = run_full_suite(spec, cfg);
  write_json(out / "verify.json", suite_to_json(res));
  print_suite_table(res, std::cout);
  return res.passed() ? kExitPass : kExitFail;
}

int cmd_example(const RunConfig& c) {
  if (c.example.empty()) throw SpecError("example needs --example NAME");
  const auto spec = example_spec(c.example, c.N, c.d, c.params);
  const auto j = spec_to_json(spec);
  if (!c.out.empty() || std::getenv("LQGTP_OUT")) {
    const auto out = output_dir(c);
    write_json(out / "spec.json", j);
  }
  std::cout << j.dump(2) << "\n";
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-horizon and ergodic equilibria of N-player LQG games, turnpike diagnostics"};
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1, 1);
  app.fallthrough();
  RunConfig c;
  app.add_option("--spec", c.spec_path, "spec JSON file");
  app.add_option("--spec-json", c.spec_json, "inline spec JSON");
  app.add_option("--example", c.example, "built-in example: fixture-a | symmetric | consensus");
  app.add_option("--N", c.N, "number of players for --example")->check(CLI::PositiveNumber);
  app.add_option("--d", c.d, "state dimension for --example")->check(CLI::PositiveNumber);
  app.add_option("--params", c.params, "example parameters k=v (A a1 a2 Q B C D xbar mu0 Sigma0 uniform)");
  app.add_option("--T", c.T, "horizon");
  app.add_option("--K", c.K, "time steps (default T/h)");
  app.add_option("--seed", c.seed, "random seed");
  app.add_option("--paths", c.paths, "Monte Carlo paths (0 disables simulation in turnpike)");
  app.add_option("--h", c.h, "time step");
  app.add_option("--out", c.out, "output directory (default $LQGTP_OUT or .)");
  app.add_option("--horizons", c.horizons, "horizons for the value-ergodicity series")->delimiter(',');
  app.add_flag("--uniform-scan", c.uniform_scan, "run the uniform-in-N scan over --scan-N");
  app.add_option("--scan-N", c.scan_N, "player counts for the uniform scan")->delimiter(',');
  app.add_flag("--paper-literal-F0", c.paper_literal_F0, "evaluate F0 with player i's own covariance in every slot");
  app.add_flag("--waive-assumptions", c.waive, "do not gate on assumption failures");
  app.add_flag("--strict", c.strict, "treat non-gating assumption records as gating");
  app.add_flag("--shift-mu0", c.shift_mu0, "negative control: simulate from mu0 + 1");
  app.add_flag("--independent-noise", c.independent_noise, "turnpike: drive the ergodic copy with independent noise");

  std::map<std::string, std::function<int(const RunConfig&)>> cmds{
      {"check", cmd_check},       {"solve-finite", cmd_solve_finite}, {"solve-ergodic", cmd_solve_ergodic},
      {"simulate", cmd_simulate}, {"turnpike", cmd_turnpike},         {"verify", cmd_verify},
      {"example", cmd_example}};
  const std::map<std::string, std::string> help{
      {"check", "assumption report (assumptions.json)"},
      {"solve-finite", "finite-horizon Riccati system (finite.csv, finite.json)"},
      {"solve-ergodic", "ergodic system (ergodic.json)"},
      {"simulate", "Monte Carlo under the finite-horizon equilibrium (simulation.csv)"},
      {"turnpike", "deviation profiles and fits (turnpike.json, profiles.csv, plots.txt)"},
      {"verify", "verification suite (verify.json)"},
      {"example", "print a built-in spec as JSON"}};
  for (const auto& [name, text] : help) app.add_subcommand(name, text);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return cmds.at(name)(c);
  } catch (const SpecError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}
