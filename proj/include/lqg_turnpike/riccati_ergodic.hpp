// Ergodic (long-time-average) equilibrium: algebraic Riccati equation per
// player, stationary precision Sigma, stationary means mu (one shared linear
// system), adjoint offsets rho and ergodic values c.

#pragma once

#include "lqg_turnpike/game_model.hpp"
#include "lqg_turnpike/matrix_core.hpp"

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace lqgtp {

/// Lambda A + A' Lambda - Lambda R^{-1} Lambda + 2 Qii, relative to the size of its terms.
inline double are_residual(const Matrix& lambda, const Matrix& A, const Matrix& R, const Matrix& Qii) {
  const Matrix Rinv = spd_inverse(R);
  const Matrix res = lambda * A + A.transpose() * lambda - lambda * Rinv * lambda + 2.0 * Qii;
  const double scale = 2.0 * spectral_norm(lambda) * spectral_norm(A) +
                       spectral_norm(lambda) * spectral_norm(lambda) * spectral_norm(Rinv) +
                       2.0 * spectral_norm(Qii);
  return spectral_norm(res) / std::max(scale, 1e-300);
}

/// Matrix sign function by scaled Newton iteration.
inline Matrix matrix_sign(const Matrix& h) {
  const Eigen::Index n = h.rows();
  Matrix z = h;
  for (int it = 0; it < 100; ++it) {
    Eigen::PartialPivLU<Matrix> lu(z);
    const Matrix zinv = lu.inverse();
    if (!zinv.allFinite()) throw NumericError("matrix_sign: singular iterate (eigenvalue on the imaginary axis)");
    double logdet = 0.0;
    const Matrix& lumat = lu.matrixLU();
    for (Eigen::Index k = 0; k < n; ++k) logdet += std::log(std::abs(lumat(k, k)));
    const double c = std::exp(-logdet / static_cast<double>(n));
    const Matrix next = 0.5 * (c * z + zinv / c);
    const double change = (next - z).lpNorm<1>();
    z = next;
    if (change <= 1e-13 * z.lpNorm<1>()) return z;
  }
  throw NumericError("matrix_sign: no convergence (Hamiltonian has eigenvalues near the imaginary axis)");
}

/// One Kleinman step: solve (A - R^{-1}L)' X + X (A - R^{-1}L) = -(2Q + L R^{-1} L).
inline Matrix kleinman_step(const Matrix& lambda, const Matrix& A, const Matrix& Rinv, const Matrix& Qii) {
  const Matrix F = A - Rinv * lambda;
  return solve_lyapunov(F, 2.0 * Qii + lambda * Rinv * lambda);
}

/// Stabilizing solution of the ARE from the stable invariant subspace of
/// H = [[A, -R^{-1}], [-2Qii, -A']], followed by Newton polishing.
inline Matrix solve_are(const Matrix& A, const Matrix& R, const Matrix& Qii, int newton_steps = 4) {
  const Eigen::Index d = A.rows();
  if (A.cols() != d || R.rows() != d || Qii.rows() != d) throw SpecError("solve_are: dimension mismatch");
  if (!is_spd(R)) throw SpecError("solve_are: R not SPD");
  if (!is_spd(Qii)) throw SpecError("solve_are: Qii not SPD");
  const Matrix Rinv = spd_inverse(R);
  Matrix H(2 * d, 2 * d);
  H << A, -Rinv, -2.0 * Qii, -A.transpose();

  const Matrix S = matrix_sign(H);
  // Stable projector; its range is the stable invariant subspace.
  const Matrix P = 0.5 * (Matrix::Identity(2 * d, 2 * d) - S);
  Eigen::ColPivHouseholderQR<Matrix> qr(P);
  qr.setThreshold(1e-8);
  if (qr.rank() != d) throw NumericError("solve_are: no d-dimensional stable subspace");
  const Matrix basis = Matrix(qr.householderQ()).leftCols(d);
  const Matrix U = basis.topRows(d);
  const Matrix V = basis.bottomRows(d);
  const Eigen::JacobiSVD<Matrix> usvd(U);
  const auto& us = usvd.singularValues();
  if (us(d - 1) <= 1e-12 * us(0)) throw NumericError("solve_are: U singular (no graph-form stable subspace)");
  Matrix lambda = symmetrize(U.transpose().fullPivLu().solve(V.transpose()).transpose());

  double res = are_residual(lambda, A, R, Qii);
  for (int k = 0; k < newton_steps && res > 1e-15; ++k) {
    if (!is_hurwitz(A - Rinv * lambda)) break;
    Matrix next = symmetrize(kleinman_step(lambda, A, Rinv, Qii));
    const double nres = are_residual(next, A, R, Qii);
    if (!(nres < res)) break;
    lambda = std::move(next);
    res = nres;
  }
  if (!is_spd(lambda)) throw NumericError("solve_are: solution is not positive definite");
  if (!is_hurwitz(A - Rinv * lambda)) throw NumericError("solve_are: closed loop not Hurwitz");
  return lambda;
}

/// Independent route: Kleinman iteration seeded with the gain A + I, whose
/// closed loop is -I.
inline Matrix solve_are_kleinman(const Matrix& A, const Matrix& R, const Matrix& Qii, int max_iter = 200) {
  const Eigen::Index d = A.rows();
  const Matrix Rinv = spd_inverse(R);
  const Matrix G0 = A + Matrix::Identity(d, d);
  Matrix lambda = solve_lyapunov(A - G0, 2.0 * Qii + G0.transpose() * R * G0);
  for (int it = 0; it < max_iter; ++it) {
    Matrix next = symmetrize(kleinman_step(lambda, A, Rinv, Qii));
    const double change = spectral_norm(next - lambda);
    lambda = std::move(next);
    if (change <= 1e-15 * std::max(1.0, spectral_norm(lambda))) return lambda;
  }
  if (are_residual(lambda, A, R, Qii) > 1e-10) throw NumericError("solve_are_kleinman: no convergence");
  return lambda;
}

struct SigmaPair {
  Matrix Sigma;      // route 1, authoritative
  Matrix Sigma_alt;  // route 2, SPD square-root formula
};

inline SigmaPair solve_sigma_ergodic(const PlayerSpec& p, const Matrix& lambda, const Matrix& Qii) {
  const Matrix Rinv = spd_inverse(p.R);
  SigmaPair out;
  out.Sigma = solve_linear(p.varsigma, Rinv * lambda - p.A);
  const Matrix B = symmetrize(p.varsigma * p.R * p.varsigma);
  const Matrix C = symmetrize(p.A.transpose() * p.R * p.A + 2.0 * Qii);
  const Matrix Bh = spd_sqrt(B);
  const Matrix Bhinv = spd_inverse(Bh);
  out.Sigma_alt = symmetrize(Bhinv * spd_sqrt(symmetrize(Bh * C * Bh)) * Bhinv);
  return out;
}

/// || Sigma varsigma R - R varsigma Sigma - (R A - A' R) ||
inline double sylvester_residual(const PlayerSpec& p, const Matrix& Sigma) {
  return spectral_norm(Sigma * p.varsigma * p.R - p.R * p.varsigma * Sigma -
                       (p.R * p.A - p.A.transpose() * p.R));
}

/// Solves M mu = q. Throws when M is numerically singular.
inline Vector solve_mu(const AssembledMatrices& am) {
  const Eigen::JacobiSVD<Matrix> svd(am.boldM);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 1e-12 * std::max(sv(0), 1e-300)) throw NumericError("M singular");
  return solve_linear(am.boldM, am.qvec);
}

inline Vector solve_rho(const PlayerSpec& p, const Matrix& Sigma, const Vector& mu_i) {
  return -p.R * p.varsigma * Sigma * mu_i;
}

struct ErgodicCertificates {
  double are_residual = 0.0;         // relative
  double spectral_abscissa = 0.0;    // of A - R^{-1} Lambda
  double sigma_residual = 0.0;       // || varsigma Sigma - (R^{-1} Lambda - A) ||
  double lambda_consistency = 0.0;   // || Lambda - R (varsigma Sigma + A) || / ||Lambda||
  double route_gap = 0.0;            // || Sigma - Sigma_alt || / ||Sigma||
  double sylvester_residual = 0.0;   // computed with Sigma_alt
  double fourth_residual = 0.0;      // || (A - R^{-1}Lambda)' rho + 2 F1 ||
  double lyapunov_residual = 0.0;    // || F Sigma^{-1} + Sigma^{-1} F' + 2 varsigma ||
};

struct ErgodicPlayer {
  Matrix Lambda;
  Matrix Sigma;      // precision
  Matrix Sigma_alt;
  Matrix cov;        // Sigma^{-1}, symmetrized
  Vector mu;
  Vector rho;
  double c = 0.0;
  ErgodicCertificates cert;
};

struct ErgodicSolution {
  std::size_t N = 0;
  std::size_t d = 0;
  F0Mode f0_mode = F0Mode::per_player;
  double M_sigma_min = 0.0;
  std::vector<ErgodicPlayer> players;

  Vector stacked_mu() const {
    Vector out(static_cast<Eigen::Index>(N * d));
    for (std::size_t i = 0; i < N; ++i) out.segment(static_cast<Eigen::Index>(i * d), static_cast<Eigen::Index>(d)) = players[i].mu;
    return out;
  }
  Vector stacked_rho() const {
    Vector out(static_cast<Eigen::Index>(N * d));
    for (std::size_t i = 0; i < N; ++i) out.segment(static_cast<Eigen::Index>(i * d), static_cast<Eigen::Index>(d)) = players[i].rho;
    return out;
  }
};

inline double compute_c(const GameSpec& spec, std::size_t i, const std::vector<ErgodicPlayer>& parts,
                        F0Mode mode) {
  const auto& p = spec.players[i];
  const auto& e = parts[i];
  std::vector<Vector> mus;
  std::vector<Matrix> covs;
  for (const auto& q : parts) {
    mus.push_back(q.mu);
    covs.push_back(q.cov);
  }
  return (p.varsigma * e.Lambda).trace() - 0.5 * e.rho.dot(spd_inverse(p.R) * e.rho) +
         eval_F0(spec, i, mus, f0_covariances(mode, i, covs));
}

/// Relative tolerance above which a certificate aborts the solve.
inline constexpr double kErgodicCertTol = 1e-9;

inline ErgodicSolution solve_ergodic_system(const GameSpec& spec, F0Mode mode = F0Mode::per_player) {
  require_valid(spec);
  const auto am = assemble(spec);
  ErgodicSolution sol;
  sol.N = spec.N;
  sol.d = spec.d;
  sol.f0_mode = mode;
  sol.M_sigma_min = min_singular_value(am.boldM);
  const Eigen::Index d = spec.dim();

  for (std::size_t i = 0; i < spec.N; ++i) {
    const auto& p = spec.players[i];
    const Matrix& Qii = spec.cost.Q(i, i, i);
    ErgodicPlayer e;
    e.Lambda = solve_are(p.A, p.R, Qii);
    auto sg = solve_sigma_ergodic(p, e.Lambda, Qii);
    e.Sigma = std::move(sg.Sigma);
    e.Sigma_alt = std::move(sg.Sigma_alt);
    e.cov = symmetrize(solve_linear(e.Sigma, Matrix::Identity(d, d)));
    const Matrix Rinv = spd_inverse(p.R);
    const Matrix F = p.A - Rinv * e.Lambda;
    e.cert.are_residual = are_residual(e.Lambda, p.A, p.R, Qii);
    e.cert.spectral_abscissa = spectral_abscissa(F);
    e.cert.sigma_residual = spectral_norm(p.varsigma * e.Sigma - (Rinv * e.Lambda - p.A)) /
                            std::max(1.0, spectral_norm(Rinv * e.Lambda - p.A));
    e.cert.lambda_consistency =
        spectral_norm(e.Lambda - p.R * (p.varsigma * e.Sigma + p.A)) / spectral_norm(e.Lambda);
    e.cert.route_gap = spectral_norm(e.Sigma - e.Sigma_alt) / spectral_norm(e.Sigma);
    e.cert.sylvester_residual = sylvester_residual(p, e.Sigma_alt);
    e.cert.lyapunov_residual = spectral_norm(F * e.cov + e.cov * F.transpose() + 2.0 * p.varsigma);
    sol.players.push_back(std::move(e));
  }

  const Vector mu = solve_mu(am);
  for (std::size_t i = 0; i < spec.N; ++i) {
    auto& e = sol.players[i];
    e.mu = mu.segment(static_cast<Eigen::Index>(i) * d, d);
    e.rho = solve_rho(spec.players[i], e.Sigma, e.mu);
  }
  std::vector<Vector> mus;
  for (const auto& e : sol.players) mus.push_back(e.mu);
  for (std::size_t i = 0; i < spec.N; ++i) {
    auto& e = sol.players[i];
    const auto& p = spec.players[i];
    const Matrix F = p.A - spd_inverse(p.R) * e.Lambda;
    const Vector f1 = eval_F1(spec, i, mus);
    const double scale = std::max(1.0, spectral_norm(F) * e.rho.norm() + 2.0 * f1.norm());
    e.cert.fourth_residual = (F.transpose() * e.rho + 2.0 * f1).norm() / scale;
    e.c = compute_c(spec, i, sol.players, mode);
  }

  for (std::size_t i = 0; i < spec.N; ++i) {
    const auto& c = sol.players[i].cert;
    const std::string tag = "ergodic solve, player " + std::to_string(i) + ": ";
    if (c.are_residual > kErgodicCertTol) throw NumericError(tag + "ARE residual above tolerance");
    if (!(c.spectral_abscissa < 0.0)) throw NumericError(tag + "closed loop not Hurwitz");
    if (c.sigma_residual > kErgodicCertTol) throw NumericError(tag + "Sigma equation residual above tolerance");
    // The remaining certificates depend on the Sylvester condition; they are
    // reported rather than enforced.
  }
  return sol;
}

inline nlohmann::json ergodic_to_json(const ErgodicSolution& sol) {
  nlohmann::json out;
  out["N"] = sol.N;
  out["d"] = sol.d;
  out["f0_mode"] = sol.f0_mode == F0Mode::per_player ? "per_player" : "paper_literal";
  out["M_sigma_min"] = sol.M_sigma_min;
  out["players"] = nlohmann::json::array();
  for (const auto& e : sol.players) {
    out["players"].push_back(
        {{"Lambda", matrix_to_json(e.Lambda)},
         {"Sigma", matrix_to_json(e.Sigma)},
         {"Sigma_alt", matrix_to_json(e.Sigma_alt)},
         {"covariance", matrix_to_json(e.cov)},
         {"mu", vector_to_json(e.mu)},
         {"rho", vector_to_json(e.rho)},
         {"c", e.c},
         {"certificates",
          {{"are_residual", e.cert.are_residual},
           {"spectral_abscissa", e.cert.spectral_abscissa},
           {"sigma_residual", e.cert.sigma_residual},
           {"lambda_consistency", e.cert.lambda_consistency},
           {"route_gap", e.cert.route_gap},
           {"sylvester_residual", e.cert.sylvester_residual},
           {"fourth_residual", e.cert.fourth_residual},
           {"lyapunov_residual", e.cert.lyapunov_residual}}}});
  }
  return out;
}

}  // namespace lqgtp
