// Deviation profiles between finite-horizon and ergodic equilibria, envelope
// fits, value ergodicity and uniform-in-N scans.

#pragma once

#include "lqg_turnpike/envelope.hpp"
#include "lqg_turnpike/game_model.hpp"
#include "lqg_turnpike/riccati_ergodic.hpp"
#include "lqg_turnpike/riccati_finite.hpp"
#include "lqg_turnpike/simulate.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lqgtp {

struct PlayerDeviation {
  std::vector<double> devLambda, devSigmaInv, devMu, devRho;
  std::vector<double> devX, devX_se, devAlpha, devAlpha_se;  // Monte Carlo (empty when not simulated)
  std::vector<double> devX_exact, devAlpha_exact;            // joint-moment equations
};

struct DeviationProfile {
  double T = 0.0;
  std::vector<double> times;
  std::vector<std::size_t> nodes;  // grid node of each sample
  std::vector<PlayerDeviation> players;
  std::vector<double> mu_hat, rho_hat;          // |mu_hat|, |rho_hat| (stacked)
  std::vector<double> X_norm, alpha_norm;       // (1/N) E|X_T - X|^2, exact moments
  std::vector<double> X_norm_mc, alpha_norm_mc; // same, Monte Carlo
};

struct DeviationOptions {
  std::size_t samples = 400;     // profile points; must divide K
  bool monte_carlo = true;
  bool independent_noise = false;  // ergodic copy driven by an independent stream
  NoisePlan plan;                  // h must equal the grid step; M, seed used
};

// ---------------------------------------------------------------------------
// Exact joint moments

struct JointMoments {
  std::vector<std::vector<double>> dev_sq;    // [player][sample] E|X_T - X|^2
  std::vector<std::vector<double>> alpha_sq;  // [player][sample] E|alpha_T - alpha|^2
};

/// Integrates mean and covariance of W = (D, X) per player with RK4 on the
/// finite grid, where D = X_T - X and X follows the ergodic feedback:
///   D' = F_T D - Rinv (Lambda_T - Lambda) X - Rinv (rho_T - rho)
/// Both copies start from the same initial draw (D(0) = 0). Under shared noise
/// D carries no diffusion, so its moments are free of cancellation.
inline JointMoments joint_moments(const FiniteRiccatiSolution& fin, const ErgodicSolution& erg, const GameSpec& spec,
                                  const std::vector<std::size_t>& sample_nodes, bool independent = false) {
  const Eigen::Index d = spec.dim();
  const std::size_t K = fin.grid.K;
  const double h = fin.grid.h();
  JointMoments out;
  out.dev_sq.assign(spec.N, {});
  out.alpha_sq.assign(spec.N, {});
  for (std::size_t i = 0; i < spec.N; ++i) {
    const auto& p = spec.players[i];
    const Matrix Rinv = spd_inverse(p.R);
    const auto& fp = fin.players[i];
    const auto& ep = erg.players[i];
    const Matrix Ferg = p.A - Rinv * ep.Lambda;
    const Matrix ss = p.sigma * p.sigma.transpose();
    Matrix S = Matrix::Zero(2 * d, 2 * d);
    S.bottomRightCorner(d, d) = ss;
    if (independent) {
      // D = X_T - X picks up sigma dW1 - sigma dW2.
      S.topLeftCorner(d, d) = 2.0 * ss;
      S.topRightCorner(d, d) = -ss;
      S.bottomLeftCorner(d, d) = -ss;
    }
    auto build = [&](const Matrix& L, const Vector& r, Matrix& Acal, Vector& b) {
      Acal = Matrix::Zero(2 * d, 2 * d);
      Acal.topLeftCorner(d, d) = p.A - Rinv * L;
      Acal.topRightCorner(d, d) = -Rinv * (L - ep.Lambda);
      Acal.bottomRightCorner(d, d) = Ferg;
      b.resize(2 * d);
      b.head(d) = -Rinv * (r - ep.rho);
      b.tail(d) = -Rinv * ep.rho;
    };
    Vector m(2 * d);
    m << Vector::Zero(d), p.mu0;
    Matrix P = Matrix::Zero(2 * d, 2 * d);
    P.bottomRightCorner(d, d) = spd_inverse(p.Sigma0);

    auto record = [&](std::size_t k) {
      out.dev_sq[i].push_back(m.head(d).squaredNorm() + P.topLeftCorner(d, d).trace());
      // alpha_T - alpha = Rinv (Lambda_T D + (Lambda_T - Lambda) X + rho_T - rho)
      Matrix L(d, 2 * d);
      L << Rinv * fp.Lambda[k], Rinv * (fp.Lambda[k] - ep.Lambda);
      const Vector ma = L * m + Rinv * (fp.rho[k] - ep.rho);
      out.alpha_sq[i].push_back(ma.squaredNorm() + (L * P * L.transpose()).trace());
    };
    std::size_t next = 0;
    auto maybe_record = [&](std::size_t k) {
      while (next < sample_nodes.size() && sample_nodes[next] == k) {
        record(k);
        ++next;
      }
    };
    maybe_record(0);
    Matrix A0, A1, Am;
    Vector b0, b1, bm;
    auto fm = [](const Matrix& Acal, const Vector& b, const Vector& x) { return Vector(Acal * x + b); };
    auto fP = [&](const Matrix& Acal, const Matrix& X) { return Matrix(Acal * X + X * Acal.transpose() + S); };
    for (std::size_t k = 0; k < K; ++k) {
      build(fp.Lambda[k], fp.rho[k], A0, b0);
      build(fp.Lambda[k + 1], fp.rho[k + 1], A1, b1);
      build(0.5 * (fp.Lambda[k] + fp.Lambda[k + 1]), 0.5 * (fp.rho[k] + fp.rho[k + 1]), Am, bm);
      const Vector km1 = fm(A0, b0, m);
      const Vector km2 = fm(Am, bm, m + 0.5 * h * km1);
      const Vector km3 = fm(Am, bm, m + 0.5 * h * km2);
      const Vector km4 = fm(A1, b1, m + h * km3);
      const Matrix kp1 = fP(A0, P);
      const Matrix kp2 = fP(Am, P + 0.5 * h * kp1);
      const Matrix kp3 = fP(Am, P + 0.5 * h * kp2);
      const Matrix kp4 = fP(A1, P + h * kp3);
      m += (h / 6.0) * (km1 + 2.0 * km2 + 2.0 * km3 + km4);
      P = symmetrize(P + (h / 6.0) * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4));
      maybe_record(k + 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paired Monte Carlo

struct PairedMoments {
  std::vector<std::vector<MeanEstimate>> dev_sq;    // [player][record]
  std::vector<std::vector<MeanEstimate>> alpha_sq;
  std::vector<MeanEstimate> total_dev_sq;           // (1/N) sum over players, per record
  std::vector<MeanEstimate> total_alpha_sq;
};

/// Simulates both policies in one pass. With shared noise the two copies see
/// identical increments and identical initial draws.
inline PairedMoments paired_simulation(const GameSpec& spec, const PolicyTable& first, const PolicyTable& second,
                                       const NoisePlan& plan, const InitialLaw& law,
                                       const std::vector<std::size_t>& record_steps, bool independent_noise) {
  plan.validate();
  const std::size_t N = spec.N;
  const std::size_t d = spec.d;
  const FlatPolicy f1(first), f2(second);
  const double sqh = std::sqrt(plan.h);
  std::vector<std::vector<double>> A(N), S(N);
  for (std::size_t i = 0; i < N; ++i) {
    A[i] = flat_rows(spec.players[i].A);
    S[i] = flat_rows(plan.noise_scale * sqh * spec.players[i].sigma);
  }
  const std::size_t R = record_steps.size();
  std::vector<std::vector<std::vector<double>>> dx(N, std::vector<std::vector<double>>(R, std::vector<double>(plan.M)));
  auto da = dx;
  std::vector<std::vector<double>> tx(R, std::vector<double>(plan.M)), ta = tx;

  std::vector<double> X1(N * d), X2(N * d), a1(N * d), a2(N * d), ax(d), z(d), sz(d);
  const std::uint64_t seed2 = independent_noise ? splitmix64(plan.seed ^ 0xA5A5A5A5ULL) : plan.seed;
  for (std::size_t m = 0; m < plan.M; ++m) {
    std::vector<NoiseStream> s1, s2;
    for (std::size_t i = 0; i < N; ++i) {
      const Vector x0 = law.draw(plan.seed, m, i);
      for (std::size_t c = 0; c < d; ++c) X1[i * d + c] = X2[i * d + c] = x0(static_cast<Eigen::Index>(c));
      s1.emplace_back(plan.seed, m, i, d);
      s2.emplace_back(seed2, m, i, d);
    }
    std::size_t next = 0;
    for (std::size_t k = 0;; ++k) {
      for (std::size_t i = 0; i < N; ++i) {
        const double* p1 = f1.at(k, i);
        const double* p2 = f2.at(k, i);
        matvec(p1, &X1[i * d], &a1[i * d], d);
        matvec(p2, &X2[i * d], &a2[i * d], d);
        for (std::size_t c = 0; c < d; ++c) {
          a1[i * d + c] += p1[d * d + c];
          a2[i * d + c] += p2[d * d + c];
        }
      }
      while (next < R && record_steps[next] == k) {
        double tot_x = 0.0, tot_a = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
          double sx = 0.0, sa = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double ex = X1[i * d + c] - X2[i * d + c];
            const double ea = a1[i * d + c] - a2[i * d + c];
            sx += ex * ex;
            sa += ea * ea;
          }
          dx[i][next][m] = sx;
          da[i][next][m] = sa;
          tot_x += sx;
          tot_a += sa;
        }
        tx[next][m] = tot_x / static_cast<double>(N);
        ta[next][m] = tot_a / static_cast<double>(N);
        ++next;
      }
      if (k == plan.steps) break;
      for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t c = 0; c < d; ++c) z[c] = s1[i].normal(k, c);
        matvec(A[i].data(), &X1[i * d], ax.data(), d);
        matvec(S[i].data(), z.data(), sz.data(), d);
        for (std::size_t c = 0; c < d; ++c) X1[i * d + c] += (ax[c] - a1[i * d + c]) * plan.h + sz[c];
        if (independent_noise)
          for (std::size_t c = 0; c < d; ++c) z[c] = s2[i].normal(k, c);
        matvec(A[i].data(), &X2[i * d], ax.data(), d);
        matvec(S[i].data(), z.data(), sz.data(), d);
        for (std::size_t c = 0; c < d; ++c) X2[i * d + c] += (ax[c] - a2[i * d + c]) * plan.h + sz[c];
      }
    }
  }
  PairedMoments out;
  out.dev_sq.assign(N, {});
  out.alpha_sq.assign(N, {});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t r = 0; r < R; ++r) {
      out.dev_sq[i].push_back(mean_and_se(dx[i][r]));
      out.alpha_sq[i].push_back(mean_and_se(da[i][r]));
    }
  for (std::size_t r = 0; r < R; ++r) {
    out.total_dev_sq.push_back(mean_and_se(tx[r]));
    out.total_alpha_sq.push_back(mean_and_se(ta[r]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Profiles

inline DeviationProfile deviation_profile(const FiniteRiccatiSolution& fin, const ErgodicSolution& erg,
                                          const GameSpec& spec, const DeviationOptions& opt) {
  if (fin.N != spec.N || erg.N != spec.N || fin.d != spec.d || erg.d != spec.d)
    throw SpecError("deviation_profile: solutions do not match the game spec");
  const std::size_t K = fin.grid.K;
  const std::size_t P = std::min(opt.samples, K);
  if (K % P != 0) throw SpecError("deviation_profile: sample count must divide K");
  const std::size_t stride = K / P;
  DeviationProfile prof;
  prof.T = fin.grid.T;
  for (std::size_t k = 0; k <= K; k += stride) {
    prof.nodes.push_back(k);
    prof.times.push_back(fin.grid.t(k));
  }
  const std::size_t S = prof.nodes.size();
  prof.players.resize(spec.N);
  prof.mu_hat.assign(S, 0.0);
  prof.rho_hat.assign(S, 0.0);
  for (std::size_t i = 0; i < spec.N; ++i) {
    auto& pd = prof.players[i];
    const auto& fp = fin.players[i];
    const auto& ep = erg.players[i];
    for (std::size_t s = 0; s < S; ++s) {
      const std::size_t k = prof.nodes[s];
      pd.devLambda.push_back(spectral_norm(fp.Lambda[k] - ep.Lambda));
      pd.devSigmaInv.push_back(spectral_norm(fp.SigmaInv[k] - ep.cov));
      const double dm = (fp.mu[k] - ep.mu).norm();
      const double dr = (fp.rho[k] - ep.rho).norm();
      pd.devMu.push_back(dm);
      pd.devRho.push_back(dr);
      prof.mu_hat[s] += dm * dm;
      prof.rho_hat[s] += dr * dr;
    }
  }
  for (std::size_t s = 0; s < S; ++s) {
    prof.mu_hat[s] = std::sqrt(prof.mu_hat[s]);
    prof.rho_hat[s] = std::sqrt(prof.rho_hat[s]);
  }

  const auto jm = joint_moments(fin, erg, spec, prof.nodes, opt.independent_noise);
  prof.X_norm.assign(S, 0.0);
  prof.alpha_norm.assign(S, 0.0);
  const auto Nd = static_cast<double>(spec.N);
  for (std::size_t i = 0; i < spec.N; ++i) {
    prof.players[i].devX_exact = jm.dev_sq[i];
    prof.players[i].devAlpha_exact = jm.alpha_sq[i];
    for (std::size_t s = 0; s < S; ++s) {
      prof.X_norm[s] += jm.dev_sq[i][s] / Nd;
      prof.alpha_norm[s] += jm.alpha_sq[i][s] / Nd;
    }
  }

  if (opt.monte_carlo) {
    NoisePlan plan = opt.plan;
    if (std::abs(plan.h - fin.grid.h()) > 1e-12 * fin.grid.h())
      throw SpecError("deviation_profile: simulation step must equal the grid step");
    plan.steps = K;
    const auto first = finite_policy(fin, spec, plan);
    const auto second = ergodic_policy(erg, spec, plan);
    const auto pm = paired_simulation(spec, first, second, plan, InitialLaw::from_spec(spec), prof.nodes,
                                      opt.independent_noise);
    for (std::size_t i = 0; i < spec.N; ++i)
      for (std::size_t s = 0; s < S; ++s) {
        prof.players[i].devX.push_back(pm.dev_sq[i][s].mean);
        prof.players[i].devX_se.push_back(pm.dev_sq[i][s].se);
        prof.players[i].devAlpha.push_back(pm.alpha_sq[i][s].mean);
        prof.players[i].devAlpha_se.push_back(pm.alpha_sq[i][s].se);
      }
    for (std::size_t s = 0; s < S; ++s) {
      prof.X_norm_mc.push_back(pm.total_dev_sq[s].mean);
      prof.alpha_norm_mc.push_back(pm.total_alpha_sq[s].mean);
    }
  }
  return prof;
}

/// Residual of the deviation system satisfied by (mu_hat, rho_hat):
///   mu_hat'  = F_T mu_hat - Rinv rho_hat - Rinv (Lambda_T - Lambda) mu
///   rho_hat' = -F_T' rho_hat - 2 Q mu_hat + (Lambda_T - Lambda) Rinv rho
/// evaluated with central differences at interior nodes; returns the max norm.
inline double deviation_system_residual(const FiniteRiccatiSolution& fin, const ErgodicSolution& erg,
                                        const GameSpec& spec) {
  const auto am = assemble(spec);
  const Eigen::Index d = spec.dim();
  const std::size_t K = fin.grid.K;
  const double h = fin.grid.h();
  const Vector mu = erg.stacked_mu();
  const Vector rho = erg.stacked_rho();
  auto hat = [&](std::size_t k, bool want_mu) {
    Vector v(spec.stacked_dim());
    for (std::size_t i = 0; i < spec.N; ++i)
      v.segment(static_cast<Eigen::Index>(i) * d, d) = want_mu ? fin.players[i].mu[k] : fin.players[i].rho[k];
    return Vector(v - (want_mu ? mu : rho));
  };
  double worst = 0.0;
  for (std::size_t k = 1; k < K; ++k) {
    const Vector dmu = (hat(k + 1, true) - hat(k - 1, true)) / (2.0 * h);
    const Vector drho = (hat(k + 1, false) - hat(k - 1, false)) / (2.0 * h);
    const Vector mh = hat(k, true), rh = hat(k, false);
    Vector rmu = dmu, rrho = drho + 2.0 * am.boldQ * mh;
    for (std::size_t i = 0; i < spec.N; ++i) {
      const Eigen::Index o = static_cast<Eigen::Index>(i) * d;
      const Matrix Rinv = am.boldR.block(o, o, d, d);
      const Matrix dL = fin.players[i].Lambda[k] - erg.players[i].Lambda;
      const Matrix FT = spec.players[i].A - Rinv * fin.players[i].Lambda[k];
      rmu.segment(o, d) -= FT * mh.segment(o, d) - Rinv * rh.segment(o, d) - Rinv * dL * mu.segment(o, d);
      rrho.segment(o, d) -= -FT.transpose() * rh.segment(o, d) + dL * Rinv * rho.segment(o, d);
    }
    worst = std::max({worst, rmu.norm(), rrho.norm()});
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Fits

struct NamedFit {
  std::string quantity;
  int player = -1;  // -1 for stacked/aggregate quantities
  DecayFit fit;
};

/// Fits with automatic branch choice (both ends, one end, or none).
inline DecayFit fit_auto(const std::vector<double>& t, const std::vector<double>& g, double T, double reference) {
  double gmax = 0.0;
  for (double v : g) gmax = std::max(gmax, std::abs(v));
  if (gmax <= kExactZeroRel * reference) return fit_envelope(t, g, T, Branch::left, reference);
  bool any = false;
  const Branch b = detect_branch(t, g, T, any);
  if (!any) {
    DecayFit f;
    f.status = FitStatus::fit_fail;
    f.branch = b;
    return f;
  }
  return fit_envelope(t, g, T, b, reference);
}

inline std::vector<NamedFit> fit_profile(const DeviationProfile& prof, const ErgodicSolution& erg) {
  std::vector<NamedFit> fits;
  for (std::size_t i = 0; i < prof.players.size(); ++i) {
    const auto& pd = prof.players[i];
    const auto& ep = erg.players[i];
    const int pi = static_cast<int>(i);
    fits.push_back({"devLambda", pi, fit_envelope(prof.times, pd.devLambda, prof.T, Branch::right,
                                                  spectral_norm(ep.Lambda))});
    fits.push_back({"devSigmaInv", pi, fit_auto(prof.times, pd.devSigmaInv, prof.T, spectral_norm(ep.cov))});
    fits.push_back({"devMu", pi, fit_auto(prof.times, pd.devMu, prof.T, std::max(1.0, ep.mu.norm()))});
    fits.push_back({"devRho", pi, fit_auto(prof.times, pd.devRho, prof.T, std::max(1.0, ep.rho.norm()))});
    fits.push_back({"devX_exact", pi, fit_auto(prof.times, pd.devX_exact, prof.T, spectral_norm(ep.cov))});
    fits.push_back({"devAlpha_exact", pi, fit_auto(prof.times, pd.devAlpha_exact, prof.T, spectral_norm(ep.cov))});
  }
  fits.push_back({"mu_hat", -1, fit_auto(prof.times, prof.mu_hat, prof.T, 1.0)});
  fits.push_back({"rho_hat", -1, fit_auto(prof.times, prof.rho_hat, prof.T, 1.0)});
  fits.push_back({"X_norm", -1, fit_auto(prof.times, prof.X_norm, prof.T, 1.0)});
  fits.push_back({"alpha_norm", -1, fit_auto(prof.times, prof.alpha_norm, prof.T, 1.0)});
  return fits;
}

// ---------------------------------------------------------------------------
// Value ergodicity

struct ValuePoint {
  double T = 0.0;
  double value_over_T = 0.0;
  double c = 0.0;
  double gap = 0.0;
};

inline std::vector<ValuePoint> value_ergodicity(const GameSpec& spec, std::size_t i, const Vector& x,
                                                const std::vector<double>& horizons, double h = 1e-3,
                                                F0Mode mode = F0Mode::per_player) {
  for (std::size_t k = 1; k < horizons.size(); ++k)
    if (!(horizons[k] > horizons[k - 1])) throw SpecError("value_ergodicity: horizons must be ascending");
  const auto erg = solve_ergodic_system(spec, mode);
  std::vector<ValuePoint> out;
  for (double T : horizons) {
    const auto K = static_cast<std::size_t>(std::llround(T / h));
    const auto fin = solve_finite_system(spec, TimeGrid(T, std::max<std::size_t>(K, 16)), mode);
    ValuePoint vp;
    vp.T = T;
    vp.value_over_T = evaluate_value(fin, i, 0.0, x) / T;
    vp.c = erg.players[i].c;
    vp.gap = std::abs(vp.value_over_T - vp.c);
    out.push_back(vp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Uniform-in-N scan

struct ScanEntry {
  std::size_t N = 0;
  std::map<std::string, DecayFit> fits;   // quantity -> fit
  std::map<std::string, double> peaks;    // quantity -> max over t of the normalized series
};

struct ScanSummary {
  std::vector<ScanEntry> entries;
  std::map<std::string, double> lambda_band;  // max/min lambdahat over N (ok fits only)
  std::map<std::string, double> K_band;
  std::map<std::string, double> spearman_peak;  // rank correlation of peak vs N
  std::map<std::string, bool> exact_zero;       // true when zero for every N
};

/// Normalized series per N: sup_i devLambda, (1/N)|mu_hat|^2, (1/N)|rho_hat|^2,
/// (1/N) E|X_T - X|^2 and (1/N) E|alpha_T - alpha|^2 (exact moments).
inline ScanSummary uniform_scan(const std::function<GameSpec(std::size_t)>& family, const std::vector<std::size_t>& Ns,
                                double T, std::size_t K, std::size_t samples = 400) {
  ScanSummary sum;
  for (std::size_t N : Ns) {
    ScanEntry e;
    e.N = N;
    try {
      const GameSpec spec = family(N);
      const auto erg = solve_ergodic_system(spec);
      const auto fin = solve_finite_system(spec, TimeGrid(T, K));
      DeviationOptions opt;
      opt.samples = samples;
      opt.monte_carlo = false;
      const auto prof = deviation_profile(fin, erg, spec, opt);
      const auto Nn = static_cast<double>(N);
      std::map<std::string, std::vector<double>> series;
      auto& lam = series["Lambda"];
      lam.assign(prof.times.size(), 0.0);
      for (const auto& pd : prof.players)
        for (std::size_t s = 0; s < lam.size(); ++s) lam[s] = std::max(lam[s], pd.devLambda[s]);
      auto& mu = series["mu_hat_sq"];
      auto& rho = series["rho_hat_sq"];
      for (std::size_t s = 0; s < prof.times.size(); ++s) {
        mu.push_back(prof.mu_hat[s] * prof.mu_hat[s] / Nn);
        rho.push_back(prof.rho_hat[s] * prof.rho_hat[s] / Nn);
      }
      series["X_sq"] = prof.X_norm;
      series["alpha_sq"] = prof.alpha_norm;
      for (const auto& [name, g] : series) {
        e.fits[name] = name == "Lambda" ? fit_envelope(prof.times, g, T, Branch::right, 1.0)
                                        : fit_auto(prof.times, g, T, 1.0);
        e.peaks[name] = *std::max_element(g.begin(), g.end());
      }
    } catch (const std::exception& ex) {
      throw NumericError("uniform_scan: N=" + std::to_string(N) + " failed: " + ex.what());
    }
    sum.entries.push_back(std::move(e));
  }
  if (sum.entries.empty()) return sum;
  for (const auto& [name, unused] : sum.entries.front().fits) {
    (void)unused;
    double lmin = std::numeric_limits<double>::infinity(), lmax = 0.0;
    double kmin = lmin, kmax = 0.0;
    bool all_zero = true;
    std::vector<double> ns, peaks;
    for (const auto& e : sum.entries) {
      const auto& f = e.fits.at(name);
      if (f.status != FitStatus::exact_zero) all_zero = false;
      if (f.ok()) {
        lmin = std::min(lmin, f.lambdahat);
        lmax = std::max(lmax, f.lambdahat);
        kmin = std::min(kmin, f.Khat);
        kmax = std::max(kmax, f.Khat);
      }
      ns.push_back(static_cast<double>(e.N));
      peaks.push_back(e.peaks.at(name));
    }
    sum.exact_zero[name] = all_zero;
    if (lmax > 0.0) {
      sum.lambda_band[name] = lmax / lmin;
      sum.K_band[name] = kmax / kmin;
    }
    sum.spearman_peak[name] = spearman(ns, peaks);
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Report output

inline nlohmann::json fit_to_json(const DecayFit& f) {
  return {{"status", fit_status_name(f.status)},
          {"branch", branch_name(f.branch)},
          {"Khat", f.Khat},
          {"lambdahat", f.lambdahat},
          {"window", {f.window_lo, f.window_hi}},
          {"rms", f.rms},
          {"points", f.points},
          {"Kenv", f.Kenv}};
}

inline nlohmann::json fits_to_json(const std::vector<NamedFit>& fits) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& nf : fits) {
    auto j = fit_to_json(nf.fit);
    j["quantity"] = nf.quantity;
    j["player"] = nf.player < 0 ? nlohmann::json() : nlohmann::json(nf.player);
    out.push_back(std::move(j));
  }
  return out;
}

inline nlohmann::json value_series_to_json(const std::vector<ValuePoint>& vs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& v : vs) out.push_back({{"T", v.T}, {"value_over_T", v.value_over_T}, {"c", v.c}, {"gap", v.gap}});
  return out;
}

inline nlohmann::json scan_to_json(const ScanSummary& s) {
  nlohmann::json out;
  out["entries"] = nlohmann::json::array();
  for (const auto& e : s.entries) {
    nlohmann::json j;
    j["N"] = e.N;
    for (const auto& [name, f] : e.fits) j["fits"][name] = fit_to_json(f);
    for (const auto& [name, p] : e.peaks) j["peaks"][name] = p;
    out["entries"].push_back(std::move(j));
  }
  out["lambda_band"] = s.lambda_band;
  out["K_band"] = s.K_band;
  out["spearman_peak"] = s.spearman_peak;
  out["exact_zero"] = s.exact_zero;
  return out;
}

/// Column names of the profiles CSV, in order.
inline std::vector<std::string> profile_columns(const DeviationProfile& prof) {
  std::vector<std::string> cols{"t"};
  for (std::size_t i = 0; i < prof.players.size(); ++i) {
    const std::string s = std::to_string(i);
    for (const char* q : {"devLambda", "devSigmaInv", "devMu", "devRho", "devX_exact", "devAlpha_exact"})
      cols.push_back(std::string(q) + s);
    if (!prof.players[i].devX.empty())
      for (const char* q : {"devX", "devX_se", "devAlpha", "devAlpha_se"}) cols.push_back(std::string(q) + s);
  }
  for (const char* q : {"mu_hat", "rho_hat", "X_norm", "alpha_norm"}) cols.push_back(q);
  if (!prof.X_norm_mc.empty()) {
    cols.push_back("X_norm_mc");
    cols.push_back("alpha_norm_mc");
  }
  return cols;
}

inline void write_profiles_csv(const DeviationProfile& prof, std::ostream& os) {
  const auto cols = profile_columns(prof);
  for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
  os << "\n" << std::setprecision(12);
  for (std::size_t s = 0; s < prof.times.size(); ++s) {
    os << prof.times[s];
    for (const auto& pd : prof.players) {
      for (const auto* v : {&pd.devLambda, &pd.devSigmaInv, &pd.devMu, &pd.devRho, &pd.devX_exact, &pd.devAlpha_exact})
        os << "," << (*v)[s];
      if (!pd.devX.empty())
        for (const auto* v : {&pd.devX, &pd.devX_se, &pd.devAlpha, &pd.devAlpha_se}) os << "," << (*v)[s];
    }
    os << "," << prof.mu_hat[s] << "," << prof.rho_hat[s] << "," << prof.X_norm[s] << "," << prof.alpha_norm[s];
    if (!prof.X_norm_mc.empty()) os << "," << prof.X_norm_mc[s] << "," << prof.alpha_norm_mc[s];
    os << "\n";
  }
}

/// Gnuplot script rendering every deviation column of the profiles CSV on a log scale.
inline std::string plot_script(const DeviationProfile& prof, const std::string& csv_name) {
  const auto cols = profile_columns(prof);
  std::ostringstream os;
  os << "# gnuplot script: gnuplot plots.txt\n"
     << "set datafile separator ','\n"
     << "set key autotitle columnhead outside\n"
     << "set logscale y\n"
     << "set format y '%.0e'\n"
     << "set xlabel 't'\n"
     << "set terminal pngcairo size 1000,650\n";
  auto group = [&](const std::string& out, const std::string& title, const std::vector<std::string>& prefixes) {
    std::vector<std::size_t> idx;
    for (std::size_t c = 1; c < cols.size(); ++c)
      for (const auto& p : prefixes)
        if (cols[c].rfind(p, 0) == 0 && cols[c].find("_se") == std::string::npos) {
          idx.push_back(c + 1);
          break;
        }
    if (idx.empty()) return;
    os << "set output '" << out << "'\nset title '" << title << "'\nplot ";
    for (std::size_t k = 0; k < idx.size(); ++k)
      os << (k ? ", " : "") << "'" << csv_name << "' using 1:(($" << idx[k] << ")>0 ? $" << idx[k]
         << " : 1/0) with lines";
    os << "\n";
  };
  group("dev_riccati.png", "Riccati coefficient deviations", {"devLambda", "devSigmaInv"});
  group("dev_mean.png", "Mean and adjoint deviations", {"devMu", "devRho", "mu_hat", "rho_hat"});
  group("dev_paths.png", "State and control deviations", {"devX", "devAlpha", "X_norm", "alpha_norm"});
  return os.str();
}

}  // namespace lqgtp
