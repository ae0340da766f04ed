// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "lqg_turnpike/lqg_turnpike.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace lqgtp;

namespace {

const double kSqrt2 = std::sqrt(2.0);

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void run(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_budget = dt < budget_s;
  const bool pass = o.ok && in_budget;
  if (!pass) ++failures;
  std::printf("%s %2d %-22s %s runtime=%.2fs (budget %.0fs)%s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str(), dt, budget_s, in_budget ? "" : " OVER BUDGET");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

double lambda_closed_form_error(std::size_t K) {
  const auto spec = fixture_a();
  const auto& p = spec.players[0];
  const TimeGrid grid(5.0, K);
  const auto L = solve_lambda_backward(p, spec.cost.Q(0, 0, 0), grid);
  double worst = 0.0;
  for (std::size_t k = 0; k <= K; ++k)
    worst = std::max(worst, std::abs(L[k](0, 0) - scalar_lambda_oracle(-1.0, 1.0, 0.5, 5.0, grid.t(k))));
  return worst;
}

double devlambda_rate(const GameSpec& spec, const ErgodicSolution& erg, double T) {
  const auto fin = solve_finite_system(spec, TimeGrid(T, static_cast<std::size_t>(std::llround(T * 1000))));
  DeviationOptions o;
  o.monte_carlo = false;
  const auto prof = deviation_profile(fin, erg, spec, o);
  const auto f = fit_envelope(prof.times, prof.players[0].devLambda, T, Branch::right);
  if (!f.ok()) throw NumericError(std::string("devLambda fit: ") + fit_status_name(f.status));
  return f.lambdahat;
}

}  // namespace

int main() {
  const auto fix = fixture_a();

  run(1, "scalar_are_oracle", 1.0, [] {
    const double e1 = std::abs(solve_are(scalar(-1.0), scalar(1.0), scalar(0.5))(0, 0) - (kSqrt2 - 1.0));
    Matrix A = Matrix::Zero(2, 2);
    A.diagonal() << -1.0, -2.0;
    Matrix expect = Matrix::Zero(2, 2);
    expect.diagonal() << kSqrt2 - 1.0, std::sqrt(5.0) - 2.0;
    const double e2 =
        (solve_are(A, Matrix::Identity(2, 2), 0.5 * Matrix::Identity(2, 2)) - expect).cwiseAbs().maxCoeff();
    return Outcome{e1 <= 1e-10 && e2 <= 1e-10, fmt("err_d1=%.2e err_d2=%.2e tol=1e-10", e1, e2)};
  });

  run(2, "finite_closed_form", 5.0, [] {
    const double e = lambda_closed_form_error(5000);
    return Outcome{e <= 1e-8, fmt("max_node_err=%.2e tol=1e-8", e)};
  });

  run(3, "sigma_dual_route", 5.0, [&] {
    std::vector<GameSpec> specs{fix};
    ExampleParams sp;
    sp.B = 0.1;
    sp.xbar = 1.0;
    for (std::size_t N : {2u, 4u, 8u})
      for (std::size_t d : {1u, 2u}) {
        specs.push_back(build_example(ExampleKind::symmetric, N, d, sp));
        specs.push_back(build_example(ExampleKind::consensus, N, d, ExampleParams{}));
      }
    double worst = 0.0;
    for (const auto& s : specs)
      for (const auto& p : solve_ergodic_system(s).players)
        worst = std::max(worst, (p.Sigma - p.Sigma_alt).norm() / p.Sigma.norm());
    return Outcome{worst <= 1e-9, fmt("max_rel_gap=%.2e over %.0f fixtures tol=1e-9", worst, double(specs.size()))};
  });

  run(4, "turnpike_rate", 30.0, [&] {
    const auto erg = solve_ergodic_system(fix);
    const double l10 = devlambda_rate(fix, erg, 10.0), l20 = devlambda_rate(fix, erg, 20.0);
    const double ref = 2.0 * kSqrt2;
    const bool band = l10 >= 0.95 * ref && l10 <= 1.05 * ref && l20 >= 0.95 * ref && l20 <= 1.05 * ref;
    const double rel = std::abs(l10 - l20) / std::max(l10, l20);
    return Outcome{band && rel <= 0.05, fmt("lambda(T=10)=%.4f lambda(T=20)=%.4f target=%.4f", l10, l20, ref)};
  });

  run(5, "mean_turnpike", 30.0, [] {
    ExampleParams p;
    p.B = 0.1;
    p.xbar = 1.0;
    const auto spec = build_example(ExampleKind::symmetric, 2, 1, p);
    const auto erg = solve_ergodic_system(spec);
    double v[2];
    int j = 0;
    for (double T : {10.0, 20.0}) {
      const auto fin = solve_finite_system(spec, TimeGrid(T, static_cast<std::size_t>(T * 1000)));
      const std::size_t mid = fin.grid.K / 2;
      v[j++] = (fin.players[0].mu[mid] - erg.players[0].mu).squaredNorm() +
               (fin.players[1].mu[mid] - erg.players[1].mu).squaredNorm();
      v[j - 1] = std::sqrt(v[j - 1]);
      double r2 = 0.0;
      for (std::size_t i = 0; i < 2; ++i) r2 += (fin.players[i].rho[mid] - erg.players[i].rho).squaredNorm();
      v[j - 1] += std::sqrt(r2);
    }
    const double ratio = v[0] / v[1];
    return Outcome{ratio >= 10.0, fmt("dev(T=10)=%.3e dev(T=20)=%.3e factor=%.1f", v[0], v[1], ratio)};
  });

  run(6, "value_ergodicity", 60.0, [&] {
    const auto vs = value_ergodicity(fix, 0, Vector::Zero(1), {20.0, 40.0});
    const double ratio = vs[1].gap / vs[0].gap;
    const double c_err = std::abs(vs[0].c - (5.0 * kSqrt2 - 4.0) / 8.0);
    return Outcome{ratio >= 0.4 && ratio <= 0.6 && c_err < 5e-7,
                   fmt("gap ratio=%.4f c=%.9f c_err=%.1e", ratio, vs[0].c, c_err)};
  });

  run(7, "pathwise_turnpike", 120.0, [&] {
    const double T = 10.0;
    const auto erg = solve_ergodic_system(fix);
    const auto fin = solve_finite_system(fix, TimeGrid(T, 10000));
    DeviationOptions o;
    o.samples = 500;
    o.plan = NoisePlan::over(T, 1e-3, 10000, 12345);
    const auto prof = deviation_profile(fin, erg, fix, o);
    const std::size_t mid = 250, late = 490;  // t = T/2, 0.98 T
    double worst = 0.0;
    for (const auto& pd : prof.players) worst = std::max(worst, pd.devX[mid] / pd.devX[late]);
    return Outcome{worst <= 1e-4, fmt("E|dX|^2(T/2)/E|dX|^2(0.98T)=%.2e at t=%.2f,%.2f", worst,
                                      prof.times[mid], prof.times[late])};
  });

  const double T = 5.0;
  const auto fin5 = solve_finite_system(fix, TimeGrid(T, 5000));
  const auto plan5 = NoisePlan::over(T, 1e-3, 10000, 12345);
  const auto law5 = InitialLaw::from_spec(fix);

  run(8, "fp_consistency", 120.0, [&] {
    const auto ens = simulate_finite(fin5, fix, plan5, law5, 25);
    const auto r = fp_consistency(fix, fin5, ens);
    return Outcome{r.passed(), fmt("max z=%.2f tol=3", r.measured)};
  });

  run(9, "ergodic_stationarity", 60.0, [&] {
    const auto erg = solve_ergodic_system(fix);
    NoisePlan sp = plan5;
    sp.seed = splitmix64(12345 + 1);
    const auto sr = ergodic_stationarity(fix, erg, sp, 5.0);
    return Outcome{sr.moments.passed() && sr.lyapunov.passed() && sr.lyapunov.measured <= 1e-9,
                   fmt("moment z=%.2f lyapunov=%.1e", sr.moments.measured, sr.lyapunov.measured)};
  });

  run(10, "nash_certificate", 120.0, [&] {
    std::vector<GainPerturbation> perts;
    for (double s : {0.0, 0.1, -0.1, 0.25, -0.25})
      for (double r : {0.0, 0.2, -0.2})
        if (s != 0.0 || r != 0.0) perts.push_back({s, r});
    const auto nr = nash_perturbation(fix, fin5, 0, perts, plan5, law5);
    return Outcome{nr.optimality.passed() && nr.identity.passed() && nr.identity_diff == 0.0,
                   fmt("%.0f perturbations, worst z=%.2f (tol 3), identity diff=%.1e", double(perts.size()),
                       nr.optimality.measured, nr.identity_diff)};
  });

  run(11, "uniform_in_N", 300.0, [] {
    const auto sc = uniform_scan(
        [](std::size_t N) { return build_example(ExampleKind::consensus, N, 1, ExampleParams{}); },
        {2, 4, 8, 16, 32}, 10.0, 10000);
    double band = 1.0, rho = -1.0;
    std::size_t used = 0;
    for (const auto& [q, zero] : sc.exact_zero) {
      if (zero) continue;
      ++used;
      band = std::max(band, sc.lambda_band.at(q));
      rho = std::max(rho, sc.spearman_peak.at(q));
    }
    return Outcome{used > 0 && band <= 1.5 && rho <= 0.5,
                   fmt("%.0f quantities, max lambda band=%.3f max spearman=%.2f", double(used), band, rho)};
  });

  run(12, "long_run_cost", 120.0, [&] {
    const auto erg = solve_ergodic_system(fix);
    const auto plan = NoisePlan::over(50.0, 1e-3, 10000, 12345);
    const auto est = running_cost_average_streaming(fix, ergodic_policy(erg, fix, plan), plan,
                                                    InitialLaw::from_spec(fix), 0, 10.0, 50.0);
    const double z = std::abs(est.mean - erg.players[0].c) / est.se;
    return Outcome{z <= 3.0, fmt("average=%.6f c=%.6f z=%.2f", est.mean, erg.players[0].c, z)};
  });

  run(13, "grid_convergence", 10.0, [] {
    const double e1 = lambda_closed_form_error(100), e2 = lambda_closed_form_error(200);
    return Outcome{e1 / e2 >= 8.0, fmt("err(h=0.05)=%.2e err(h=0.025)=%.2e ratio=%.1f", e1, e2, e1 / e2)};
  });

  run(14, "hjb_residual", 10.0, [&] {
    double interior = 0.0, ends = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
      for (double x : {-2.0, -1.0, 0.0, 0.5, 1.0, 2.0}) {
        const Vector xv = Vector::Constant(1, x);
        for (std::size_t k : {1250u, 2500u, 3750u})
          interior = std::max(interior, std::abs(hjb_residual_at_node(fin5, fix, i, k, xv)));
        for (std::size_t k : {0u, 5000u}) ends = std::max(ends, std::abs(hjb_residual_at_node(fin5, fix, i, k, xv)));
      }
    return Outcome{interior <= 1e-6 && ends <= 1e-4, fmt("interior=%.2e endpoints=%.2e", interior, ends)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
