// Finite-horizon equilibrium on a uniform time grid:
//   Lambda  backward RK4 from Lambda(T) = 0,
//   V = Sigma^{-1}  forward implicit trapezoid from V(0) = Sigma0^{-1},
//   (mu, rho)  coupled two-point problem, one global banded solve,
//   kappa  trapezoidal quadrature from kappa(T) = 0.

#pragma once

#include "lqg_turnpike/game_model.hpp"
#include "lqg_turnpike/matrix_core.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lqgtp {

struct TimeGrid {
  double T = 1.0;
  std::size_t K = 16;

  TimeGrid() = default;
  TimeGrid(double horizon, std::size_t steps) : T(horizon), K(steps) {
    if (!(T > 0.0) || !std::isfinite(T)) throw SpecError("TimeGrid: T must be positive");
    if (K < 16) throw SpecError("TimeGrid: K must be at least 16");
  }
  /// Default resolution: h <= min(1e-3, T/1000).
  static TimeGrid with_default_steps(double horizon) {
    const double h = std::min(1e-3, horizon / 1000.0);
    return TimeGrid(horizon, static_cast<std::size_t>(std::ceil(horizon / h - 1e-9)));
  }
  double h() const { return T / static_cast<double>(K); }
  double t(std::size_t k) const { return T * static_cast<double>(k) / static_cast<double>(K); }
};

struct FinitePlayerPath {
  std::vector<Matrix> Lambda;
  std::vector<Matrix> SigmaInv;  // covariance
  std::vector<Vector> mu;
  std::vector<Vector> rho;
  std::vector<double> kappa;
};

struct FiniteRiccatiSolution {
  TimeGrid grid;
  std::size_t N = 0;
  std::size_t d = 0;
  F0Mode f0_mode = F0Mode::per_player;
  std::vector<FinitePlayerPath> players;
};

// ---------------------------------------------------------------------------
// Lambda

inline Matrix lambda_rhs_backward(const Matrix& L, const Matrix& A, const Matrix& Rinv, const Matrix& Qii) {
  // dLambda/ds with s = T - t
  return L * A + A.transpose() * L - L * Rinv * L + 2.0 * Qii;
}

inline std::vector<Matrix> solve_lambda_backward(const PlayerSpec& p, const Matrix& Qii, const TimeGrid& grid) {
  const Eigen::Index d = p.A.rows();
  const Matrix Rinv = spd_inverse(p.R);
  const double h = grid.h();
  std::vector<Matrix> out(grid.K + 1);
  Matrix L = Matrix::Zero(d, d);
  out[grid.K] = L;
  for (std::size_t k = grid.K; k-- > 0;) {
    const Matrix k1 = lambda_rhs_backward(L, p.A, Rinv, Qii);
    const Matrix k2 = lambda_rhs_backward(L + 0.5 * h * k1, p.A, Rinv, Qii);
    const Matrix k3 = lambda_rhs_backward(L + 0.5 * h * k2, p.A, Rinv, Qii);
    const Matrix k4 = lambda_rhs_backward(L + h * k3, p.A, Rinv, Qii);
    L = symmetrize(L + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (!L.allFinite()) throw NumericError("solve_lambda_backward: blow-up; reduce the step size");
    const double lmin = lambda_min(L);
    if (lmin < -1e-10 * std::max(1.0, lambda_max(L)))
      throw NumericError("solve_lambda_backward: PSD violated at t=" + std::to_string(grid.t(k)) +
                         "; reduce the step size");
    out[k] = L;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Covariance V = Sigma^{-1}

/// Kronecker matrix of X -> F X + X F' acting on column-major vec(X).
inline Matrix lyap_operator(const Matrix& F) {
  const Eigen::Index d = F.rows();
  Matrix op = Matrix::Zero(d * d, d * d);
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index k = 0; k < d; ++k) {
        op(c * d + r, c * d + k) += F(r, k);  // (F X)(r,c)
        op(c * d + r, k * d + r) += F(c, k);  // (X F')(r,c) = sum_k X(r,k) F(c,k)
      }
  return op;
}

inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }
inline Matrix unvec(const Vector& v, Eigen::Index d) { return Eigen::Map<const Matrix>(v.data(), d, d); }

inline std::vector<Matrix> solve_sigma_forward(const PlayerSpec& p, const std::vector<Matrix>& lambda,
                                               const TimeGrid& grid) {
  if (lambda.size() != grid.K + 1) throw SpecError("solve_sigma_forward: Lambda path length mismatch");
  const Eigen::Index d = p.A.rows();
  const Matrix Rinv = spd_inverse(p.R);
  const double h = grid.h();
  const Matrix I = Matrix::Identity(d * d, d * d);
  const Vector drive = vec(2.0 * h * p.varsigma);
  std::vector<Matrix> out(grid.K + 1);
  out[0] = symmetrize(spd_inverse(p.Sigma0));
  Matrix op_k = lyap_operator(p.A - Rinv * lambda[0]);
  for (std::size_t k = 0; k < grid.K; ++k) {
    const Matrix op_next = lyap_operator(p.A - Rinv * lambda[k + 1]);
    const Vector rhs = vec(out[k]) + 0.5 * h * (op_k * vec(out[k])) + drive;
    const Vector v = (I - 0.5 * h * op_next).partialPivLu().solve(rhs);
    Matrix V = symmetrize(unvec(v, d));
    if (!V.allFinite() || !is_spd(V))
      throw NumericError("solve_sigma_forward: covariance lost positive definiteness at t=" +
                         std::to_string(grid.t(k + 1)) + "; reduce the step size");
    out[k + 1] = std::move(V);
    op_k = op_next;
  }
  return out;
}

// ---------------------------------------------------------------------------
// (mu, rho) two-point boundary value problem

struct StackedCoefficients {
  std::size_t N = 0;
  Eigen::Index d = 0;
  std::vector<Matrix> Rinv;                 // per player
  std::vector<std::vector<Matrix>> F;       // F[i][k] = A^i - R^{-1} Lambda^i(t_k)
  Matrix boldQ;
  Vector qvec;
  Vector mu0;
};

inline StackedCoefficients stacked_coefficients(const GameSpec& spec, const std::vector<std::vector<Matrix>>& lambdas) {
  StackedCoefficients sc;
  sc.N = spec.N;
  sc.d = spec.dim();
  const auto am = assemble(spec);
  sc.boldQ = am.boldQ;
  sc.qvec = am.qvec;
  sc.mu0 = Vector(spec.stacked_dim());
  for (std::size_t i = 0; i < spec.N; ++i) {
    const auto& p = spec.players[i];
    sc.Rinv.push_back(spd_inverse(p.R));
    std::vector<Matrix> Fi;
    Fi.reserve(lambdas[i].size());
    for (const auto& L : lambdas[i]) Fi.push_back(p.A - sc.Rinv.back() * L);
    sc.F.push_back(std::move(Fi));
    sc.mu0.segment(static_cast<Eigen::Index>(i) * sc.d, sc.d) = p.mu0;
  }
  return sc;
}

struct MuRhoPaths {
  std::vector<Vector> mu;   // stacked Nd-vectors per node
  std::vector<Vector> rho;
};

/// Global implicit-trapezoid discretization solved as one banded system.
/// Unknown ordering per node: [rho_k, mu_k]. Row ordering: mu(0) = mu0, then per
/// step the mu- and rho-equations, then rho(T) = 0.
inline MuRhoPaths solve_mu_rho_direct(const StackedCoefficients& sc, const TimeGrid& grid) {
  const std::size_t N = sc.N;
  const auto d = static_cast<std::size_t>(sc.d);
  const std::size_t nd = N * d;
  const std::size_t n = 2 * nd;
  const std::size_t K = grid.K;
  const double h = grid.h();
  BandedMatrix M(n * (K + 1), 3 * nd, 3 * nd);
  Vector rhs = Vector::Zero(static_cast<Eigen::Index>(n * (K + 1)));
  auto rho_col = [&](std::size_t k, std::size_t a) { return k * n + a; };
  auto mu_col = [&](std::size_t k, std::size_t a) { return k * n + nd + a; };

  for (std::size_t a = 0; a < nd; ++a) {
    M.at(a, mu_col(0, a)) = 1.0;
    rhs(static_cast<Eigen::Index>(a)) = sc.mu0(static_cast<Eigen::Index>(a));
  }
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t mrow = nd + k * n;
    const std::size_t rrow = mrow + nd;
    for (std::size_t i = 0; i < N; ++i) {
      const Matrix& Fk = sc.F[i][k];
      const Matrix& Fk1 = sc.F[i][k + 1];
      const Matrix& Ri = sc.Rinv[i];
      for (std::size_t r = 0; r < d; ++r) {
        const std::size_t a = i * d + r;
        // mu_{k+1} - mu_k - h/2 [F_k mu_k - Rinv rho_k + F_{k+1} mu_{k+1} - Rinv rho_{k+1}] = 0
        M.at(mrow + a, mu_col(k + 1, a)) += 1.0;
        M.at(mrow + a, mu_col(k, a)) -= 1.0;
        // rho_{k+1} - rho_k + h/2 [F_k' rho_k + F_{k+1}' rho_{k+1} + 2 Q mu_k + 2 Q mu_{k+1}] = 2 h q
        M.at(rrow + a, rho_col(k + 1, a)) += 1.0;
        M.at(rrow + a, rho_col(k, a)) -= 1.0;
        for (std::size_t c = 0; c < d; ++c) {
          const std::size_t b = i * d + c;
          const auto ri = static_cast<Eigen::Index>(r);
          const auto ci = static_cast<Eigen::Index>(c);
          M.at(mrow + a, mu_col(k, b)) -= 0.5 * h * Fk(ri, ci);
          M.at(mrow + a, mu_col(k + 1, b)) -= 0.5 * h * Fk1(ri, ci);
          M.at(mrow + a, rho_col(k, b)) += 0.5 * h * Ri(ri, ci);
          M.at(mrow + a, rho_col(k + 1, b)) += 0.5 * h * Ri(ri, ci);
          M.at(rrow + a, rho_col(k, b)) += 0.5 * h * Fk(ci, ri);
          M.at(rrow + a, rho_col(k + 1, b)) += 0.5 * h * Fk1(ci, ri);
        }
        rhs(static_cast<Eigen::Index>(rrow + a)) = 2.0 * h * sc.qvec(static_cast<Eigen::Index>(a));
      }
    }
    for (std::size_t a = 0; a < nd; ++a)
      for (std::size_t b = 0; b < nd; ++b) {
        const double q = sc.boldQ(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        if (q == 0.0) continue;
        M.at(rrow + a, mu_col(k, b)) += h * q;
        M.at(rrow + a, mu_col(k + 1, b)) += h * q;
      }
  }
  const std::size_t last = nd + K * n;
  for (std::size_t a = 0; a < nd; ++a) M.at(last + a, rho_col(K, a)) = 1.0;

  const Vector z = M.solve(rhs);
  MuRhoPaths out;
  out.mu.resize(K + 1);
  out.rho.resize(K + 1);
  const auto ndi = static_cast<Eigen::Index>(nd);
  for (std::size_t k = 0; k <= K; ++k) {
    const auto base = static_cast<Eigen::Index>(k * n);
    out.rho[k] = z.segment(base, ndi);
    out.mu[k] = z.segment(base + ndi, ndi);
  }
  return out;
}

struct PicardResult {
  MuRhoPaths paths;
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;
};

/// Damped fixed-point iteration mu <- (1-w) mu + w Psi(mu), where Psi solves
/// the rho equation backward for the given mu and then the mu equation
/// forward for that rho. Same trapezoidal discretization as the direct solve.
inline PicardResult solve_mu_rho_picard(const StackedCoefficients& sc, const TimeGrid& grid,
                                        double omega = 0.5, double tol = 1e-10, int max_iter = 500) {
  const std::size_t N = sc.N;
  const Eigen::Index d = sc.d;
  const std::size_t K = grid.K;
  const double h = grid.h();
  const Eigen::Index nd = static_cast<Eigen::Index>(N) * d;
  const Matrix Id = Matrix::Identity(d, d);

  // Per-node factorizations are reused across iterations.
  std::vector<std::vector<Eigen::PartialPivLU<Matrix>>> back_lu(N), fwd_lu(N);
  for (std::size_t i = 0; i < N; ++i) {
    back_lu[i].resize(K + 1);
    fwd_lu[i].resize(K + 1);
    for (std::size_t k = 0; k <= K; ++k) {
      back_lu[i][k].compute(Id - 0.5 * h * sc.F[i][k].transpose());
      fwd_lu[i][k].compute(Id - 0.5 * h * sc.F[i][k]);
    }
  }

  PicardResult res;
  std::vector<Vector> mu(K + 1, sc.mu0);
  std::vector<Vector> rho(K + 1, Vector::Zero(nd));
  for (int it = 1; it <= max_iter; ++it) {
    // Psi_1: rho backward.
    rho[K].setZero();
    for (std::size_t k = K; k-- > 0;) {
      const Vector coupling = h * (sc.boldQ * (mu[k] + mu[k + 1])) - 2.0 * h * sc.qvec;
      for (std::size_t i = 0; i < N; ++i) {
        const Eigen::Index o = static_cast<Eigen::Index>(i) * d;
        const Vector r = rho[k + 1].segment(o, d) + 0.5 * h * sc.F[i][k + 1].transpose() * rho[k + 1].segment(o, d) +
                         coupling.segment(o, d);
        rho[k].segment(o, d) = back_lu[i][k].solve(r);
      }
    }
    // Psi_2: mu forward.
    std::vector<Vector> next(K + 1, Vector::Zero(nd));
    next[0] = sc.mu0;
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < N; ++i) {
        const Eigen::Index o = static_cast<Eigen::Index>(i) * d;
        const Vector r = next[k].segment(o, d) + 0.5 * h * sc.F[i][k] * next[k].segment(o, d) -
                         0.5 * h * sc.Rinv[i] * (rho[k].segment(o, d) + rho[k + 1].segment(o, d));
        next[k + 1].segment(o, d) = fwd_lu[i][k + 1].solve(r);
      }
    }
    double change = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      const Vector upd = (1.0 - omega) * mu[k] + omega * next[k];
      change = std::max(change, (upd - mu[k]).cwiseAbs().maxCoeff());
      mu[k] = upd;
    }
    res.iterations = it;
    res.last_change = change;
    if (!std::isfinite(change)) break;
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  // Final rho consistent with the returned mu.
  rho[K].setZero();
  for (std::size_t k = K; k-- > 0;) {
    const Vector coupling = h * (sc.boldQ * (mu[k] + mu[k + 1])) - 2.0 * h * sc.qvec;
    for (std::size_t i = 0; i < N; ++i) {
      const Eigen::Index o = static_cast<Eigen::Index>(i) * d;
      const Vector r = rho[k + 1].segment(o, d) + 0.5 * h * sc.F[i][k + 1].transpose() * rho[k + 1].segment(o, d) +
                       coupling.segment(o, d);
      rho[k].segment(o, d) = back_lu[i][k].solve(r);
    }
  }
  res.paths.mu = std::move(mu);
  res.paths.rho = std::move(rho);
  return res;
}

/// Convenience wrapper taking per-player Lambda paths.
inline MuRhoPaths solve_mu_rho_fbtp(const GameSpec& spec, const std::vector<std::vector<Matrix>>& lambdas,
                                    const TimeGrid& grid) {
  return solve_mu_rho_direct(stacked_coefficients(spec, lambdas), grid);
}

// ---------------------------------------------------------------------------
// kappa

/// Integrand of kappa for player i at node k: tr(varsigma Lambda) - 1/2 rho' R^{-1} rho + F0.
inline double kappa_integrand(const GameSpec& spec, std::size_t i, const FiniteRiccatiSolution& sol, std::size_t k) {
  const auto& p = spec.players[i];
  const auto& pp = sol.players[i];
  std::vector<Vector> mus;
  std::vector<Matrix> covs;
  for (const auto& q : sol.players) {
    mus.push_back(q.mu[k]);
    covs.push_back(q.SigmaInv[k]);
  }
  return (p.varsigma * pp.Lambda[k]).trace() - 0.5 * pp.rho[k].dot(spd_inverse(p.R) * pp.rho[k]) +
         eval_F0(spec, i, mus, f0_covariances(sol.f0_mode, i, covs));
}

/// Fills kappa for player i from the other paths already stored in `sol`.
inline std::vector<double> compute_kappa(const GameSpec& spec, std::size_t i, const FiniteRiccatiSolution& sol) {
  const std::size_t K = sol.grid.K;
  const double h = sol.grid.h();
  std::vector<double> g(K + 1);
  for (std::size_t k = 0; k <= K; ++k) g[k] = kappa_integrand(spec, i, sol, k);
  std::vector<double> kappa(K + 1, 0.0);
  for (std::size_t k = K; k-- > 0;) kappa[k] = kappa[k + 1] + 0.5 * h * (g[k] + g[k + 1]);
  return kappa;
}

// ---------------------------------------------------------------------------
// Orchestration

inline FiniteRiccatiSolution solve_finite_system(const GameSpec& spec, const TimeGrid& grid,
                                                 F0Mode mode = F0Mode::per_player) {
  require_valid(spec);
  FiniteRiccatiSolution sol;
  sol.grid = grid;
  sol.N = spec.N;
  sol.d = spec.d;
  sol.f0_mode = mode;
  sol.players.resize(spec.N);
  std::vector<std::vector<Matrix>> lambdas(spec.N);
  for (std::size_t i = 0; i < spec.N; ++i) {
    sol.players[i].Lambda = solve_lambda_backward(spec.players[i], spec.cost.Q(i, i, i), grid);
    lambdas[i] = sol.players[i].Lambda;
  }
  for (std::size_t i = 0; i < spec.N; ++i)
    sol.players[i].SigmaInv = solve_sigma_forward(spec.players[i], sol.players[i].Lambda, grid);

  const auto paths = solve_mu_rho_fbtp(spec, lambdas, grid);
  const Eigen::Index d = spec.dim();
  for (std::size_t i = 0; i < spec.N; ++i) {
    auto& pp = sol.players[i];
    pp.mu.resize(grid.K + 1);
    pp.rho.resize(grid.K + 1);
    for (std::size_t k = 0; k <= grid.K; ++k) {
      pp.mu[k] = paths.mu[k].segment(static_cast<Eigen::Index>(i) * d, d);
      pp.rho[k] = paths.rho[k].segment(static_cast<Eigen::Index>(i) * d, d);
    }
    // Boundary values are imposed exactly; the banded solve reproduces them
    // only to rounding.
    pp.mu[0] = spec.players[i].mu0;
    pp.rho[grid.K].setZero();
  }
  for (std::size_t i = 0; i < spec.N; ++i) sol.players[i].kappa = compute_kappa(spec, i, sol);
  return sol;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Interp {
  std::size_t k;
  double w;  // weight of node k+1
};

inline Interp locate(const TimeGrid& grid, double t) {
  if (!(t >= -1e-12 * grid.T && t <= grid.T * (1.0 + 1e-12)))
    throw SpecError("time " + std::to_string(t) + " outside [0, T]");
  const double s = std::clamp(t / grid.h(), 0.0, static_cast<double>(grid.K));
  auto k = static_cast<std::size_t>(std::floor(s));
  if (k >= grid.K) return {grid.K - 1, 1.0};
  return {k, s - static_cast<double>(k)};
}

template <class V>
V lerp_path(const std::vector<V>& path, const Interp& at) {
  return (1.0 - at.w) * path[at.k] + at.w * path[at.k + 1];
}

inline double evaluate_value(const FiniteRiccatiSolution& sol, std::size_t i, double t, const Vector& x) {
  const auto at = locate(sol.grid, t);
  const auto& pp = sol.players[i];
  const Matrix L = lerp_path(pp.Lambda, at);
  const Vector r = lerp_path(pp.rho, at);
  const double kap = lerp_path(pp.kappa, at);
  return 0.5 * x.dot(L * x) + r.dot(x) + kap;
}

inline Vector evaluate_feedback(const FiniteRiccatiSolution& sol, const GameSpec& spec, std::size_t i, double t,
                                const Vector& x) {
  const auto at = locate(sol.grid, t);
  const auto& pp = sol.players[i];
  return spd_inverse(spec.players[i].R) * (lerp_path(pp.Lambda, at) * x + lerp_path(pp.rho, at));
}

/// Time derivative of a node path by central differences in the interior and
/// second-order one-sided differences at the ends.
template <class V>
V node_derivative(const std::vector<V>& path, std::size_t k, double h) {
  const std::size_t K = path.size() - 1;
  if (k == 0) return (-3.0 * path[0] + 4.0 * path[1] - path[2]) / (2.0 * h);
  if (k == K) return (3.0 * path[K] - 4.0 * path[K - 1] + path[K - 2]) / (2.0 * h);
  return (path[k + 1] - path[k - 1]) / (2.0 * h);
}

/// HJB residual of the quadratic ansatz for player i at grid node k:
/// dv/dt + tr(varsigma D2v) + H(x, Dv) + f^i(x; m^{-i}(t_k)).
inline double hjb_residual_at_node(const FiniteRiccatiSolution& sol, const GameSpec& spec, std::size_t i,
                                   std::size_t k, const Vector& x) {
  const double h = sol.grid.h();
  const auto& p = spec.players[i];
  const auto& pp = sol.players[i];
  const Matrix dL = node_derivative(pp.Lambda, k, h);
  const Vector dr = node_derivative(pp.rho, k, h);
  const double dk = node_derivative(pp.kappa, k, h);
  const double dvdt = 0.5 * x.dot(dL * x) + dr.dot(x) + dk;

  const Vector grad = pp.Lambda[k] * x + pp.rho[k];
  const double hamiltonian = grad.dot(p.A * x) - 0.5 * grad.dot(spd_inverse(p.R) * grad);

  std::vector<Vector> mus;
  std::vector<Matrix> covs;
  for (const auto& q : sol.players) {
    mus.push_back(q.mu[k]);
    covs.push_back(q.SigmaInv[k]);
  }
  const double f = x.dot(spec.cost.Q(i, i, i) * x) + 2.0 * eval_F1(spec, i, mus).dot(x) +
                   eval_F0(spec, i, mus, f0_covariances(sol.f0_mode, i, covs));
  return dvdt + (p.varsigma * pp.Lambda[k]).trace() + hamiltonian + f;
}

inline double hjb_residual(const FiniteRiccatiSolution& sol, const GameSpec& spec, std::size_t i, double t,
                           const Vector& x) {
  const double s = t / sol.grid.h();
  const double kr = std::round(s);
  if (std::abs(s - kr) > 1e-6 || kr < 0.0 || kr > static_cast<double>(sol.grid.K))
    throw SpecError("hjb_residual: t must be a grid node");
  return hjb_residual_at_node(sol, spec, i, static_cast<std::size_t>(kr), x);
}

// ---------------------------------------------------------------------------
// Export

inline void write_finite_csv(const FiniteRiccatiSolution& sol, std::ostream& os) {
  const auto d = static_cast<Eigen::Index>(sol.d);
  os << "t";
  for (std::size_t i = 0; i < sol.N; ++i) {
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) os << ",Lambda" << i << "_" << r << c;
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) os << ",SigmaInv" << i << "_" << r << c;
    for (Eigen::Index r = 0; r < d; ++r) os << ",mu" << i << "_" << r;
    for (Eigen::Index r = 0; r < d; ++r) os << ",rho" << i << "_" << r;
    os << ",kappa" << i;
  }
  os << "\n" << std::setprecision(17);
  for (std::size_t k = 0; k <= sol.grid.K; ++k) {
    os << sol.grid.t(k);
    for (const auto& pp : sol.players) {
      for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) os << "," << pp.Lambda[k](r, c);
      for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) os << "," << pp.SigmaInv[k](r, c);
      for (Eigen::Index r = 0; r < d; ++r) os << "," << pp.mu[k](r);
      for (Eigen::Index r = 0; r < d; ++r) os << "," << pp.rho[k](r);
      os << "," << pp.kappa[k];
    }
    os << "\n";
  }
}

inline nlohmann::json finite_manifest(const FiniteRiccatiSolution& sol, const GameSpec& spec,
                                      const std::string& csv_path) {
  nlohmann::json out;
  out["grid"] = {{"T", sol.grid.T}, {"K", sol.grid.K}, {"h", sol.grid.h()}};
  out["N"] = sol.N;
  out["d"] = sol.d;
  out["f0_mode"] = sol.f0_mode == F0Mode::per_player ? "per_player" : "paper_literal";
  out["csv"] = csv_path;
  out["players"] = nlohmann::json::array();
  for (std::size_t i = 0; i < sol.N; ++i) {
    const auto& pp = sol.players[i];
    double min_eig_L = std::numeric_limits<double>::infinity();
    double min_eig_V = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= sol.grid.K; ++k) {
      min_eig_L = std::min(min_eig_L, lambda_min(pp.Lambda[k]));
      min_eig_V = std::min(min_eig_V, lambda_min(pp.SigmaInv[k]));
    }
    out["players"].push_back(
        {{"Lambda_T_norm", spectral_norm(pp.Lambda.back())},
         {"rho_T_norm", pp.rho.back().norm()},
         {"kappa_T", pp.kappa.back()},
         {"SigmaInv_0_error", spectral_norm(pp.SigmaInv.front() - spd_inverse(spec.players[i].Sigma0))},
         {"mu_0_error", (pp.mu.front() - spec.players[i].mu0).norm()},
         {"min_eig_Lambda", min_eig_L},
         {"min_eig_SigmaInv", min_eig_V},
         {"Lambda_0", matrix_to_json(pp.Lambda.front())},
         {"kappa_0", pp.kappa.front()}});
  }
  return out;
}

}  // namespace lqgtp
