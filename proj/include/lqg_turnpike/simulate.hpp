// Euler-Maruyama simulation of equilibrium paths with counter-based noise.
//
// Every Gaussian increment is a pure function of (seed, path, player, step,
// component), so finite-horizon and ergodic runs with the same seed see the
// same Brownian increments, and any single increment can be regenerated.

#pragma once

#include "lqg_turnpike/game_model.hpp"
#include "lqg_turnpike/matrix_core.hpp"
#include "lqg_turnpike/riccati_ergodic.hpp"
#include "lqg_turnpike/riccati_finite.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace lqgtp {

// ---------------------------------------------------------------------------
// Noise

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline double to_unit_open(std::uint64_t v) {
  return (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
}

/// Key of one Box-Muller pair. `domain` separates increments from initial draws.
inline std::uint64_t noise_key(std::uint64_t seed, std::uint64_t domain, std::uint64_t m, std::uint64_t i,
                               std::uint64_t pair) {
  std::uint64_t x = splitmix64(seed ^ (domain * 0xD1B54A32D192ED03ULL));
  x = splitmix64(x ^ m);
  x = splitmix64(x ^ (i * 0x9E3779B97F4A7C15ULL));
  return splitmix64(x ^ (pair * 0xC2B2AE3D27D4EB4FULL));
}

inline void box_muller(std::uint64_t key, double& z0, double& z1) {
  const double u1 = to_unit_open(splitmix64(key ^ 0x1ULL));
  const double u2 = to_unit_open(splitmix64(key ^ 0x2ULL));
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}

inline constexpr std::uint64_t kIncrementDomain = 1;
inline constexpr std::uint64_t kInitialDomain = 2;

/// Standard normal number c of step k for (path m, player i), d components per step.
inline double standard_normal(std::uint64_t seed, std::uint64_t m, std::uint64_t i, std::uint64_t k,
                              std::uint64_t c, std::uint64_t d, std::uint64_t domain = kIncrementDomain) {
  const std::uint64_t s = k * d + c;
  double z0 = 0.0, z1 = 0.0;
  box_muller(noise_key(seed, domain, m, i, s / 2), z0, z1);
  return (s % 2 == 0) ? z0 : z1;
}

/// Sequential reader over one (path, player) stream; reuses the second half of each pair.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t m, std::uint64_t i, std::uint64_t d,
              std::uint64_t domain = kIncrementDomain)
      : seed_(seed), m_(m), i_(i), d_(d), domain_(domain) {}

  double normal(std::uint64_t k, std::uint64_t c) {
    const std::uint64_t s = k * d_ + c;
    const std::uint64_t pair = s / 2;
    if (pair != cached_) {
      box_muller(noise_key(seed_, domain_, m_, i_, pair), z_[0], z_[1]);
      cached_ = pair;
    }
    return z_[s % 2];
  }

 private:
  std::uint64_t seed_, m_, i_, d_, domain_;
  std::uint64_t cached_ = ~0ULL;
  double z_[2] = {0.0, 0.0};
};

struct NoisePlan {
  std::uint64_t seed = 12345;
  std::size_t M = 10000;
  double h = 1e-3;
  std::size_t steps = 0;
  double noise_scale = 1.0;  // multiplies sigma; 0 gives the noiseless dynamics

  double horizon() const { return h * static_cast<double>(steps); }
  void validate() const {
    if (M < 1) throw SpecError("NoisePlan: M must be at least 1");
    if (!(h > 0.0)) throw SpecError("NoisePlan: h must be positive");
    if (steps < 1) throw SpecError("NoisePlan: steps must be at least 1");
  }
  static NoisePlan over(double horizon, double h, std::size_t M, std::uint64_t seed) {
    NoisePlan p;
    p.seed = seed;
    p.M = M;
    p.h = h;
    p.steps = static_cast<std::size_t>(std::llround(horizon / h));
    if (p.steps == 0 || std::abs(static_cast<double>(p.steps) * h - horizon) > 1e-9 * horizon)
      throw SpecError("NoisePlan: h must divide the horizon");
    return p;
  }
};

// ---------------------------------------------------------------------------
// Initial laws

struct InitialLaw {
  std::vector<Vector> mean;
  std::vector<Matrix> chol;  // lower Cholesky factor of the covariance; empty = point mass

  static InitialLaw fixed(std::vector<Vector> x0) { return {std::move(x0), {}}; }
  static InitialLaw gaussian(std::vector<Vector> mean, const std::vector<Matrix>& cov) {
    InitialLaw law{std::move(mean), {}};
    for (const auto& c : cov) {
      Eigen::LLT<Matrix> llt(symmetrize(c));
      if (llt.info() != Eigen::Success) throw SpecError("InitialLaw: covariance not SPD");
      law.chol.push_back(llt.matrixL());
    }
    return law;
  }
  /// N(mu0, Sigma0^{-1}) from the game spec.
  static InitialLaw from_spec(const GameSpec& spec) {
    std::vector<Vector> mean;
    std::vector<Matrix> cov;
    for (const auto& p : spec.players) {
      mean.push_back(p.mu0);
      cov.push_back(spd_inverse(p.Sigma0));
    }
    return gaussian(std::move(mean), cov);
  }
  /// Stationary law N(mu, Sigma^{-1}) of the ergodic equilibrium.
  static InitialLaw stationary(const ErgodicSolution& erg) {
    std::vector<Vector> mean;
    std::vector<Matrix> cov;
    for (const auto& e : erg.players) {
      mean.push_back(e.mu);
      cov.push_back(e.cov);
    }
    return gaussian(std::move(mean), cov);
  }

  Vector draw(std::uint64_t seed, std::uint64_t m, std::uint64_t i) const {
    const Vector& mu = mean[i];
    if (chol.empty()) return mu;
    const auto d = static_cast<std::uint64_t>(mu.size());
    NoiseStream ns(seed, m, i, d, kInitialDomain);
    Vector z(mu.size());
    for (Eigen::Index c = 0; c < mu.size(); ++c) z(c) = ns.normal(0, static_cast<std::uint64_t>(c));
    return mu + chol[i] * z;
  }
};

// ---------------------------------------------------------------------------
// Feedback policies: alpha^i = G^i(k) x + g^i(k) at simulation step k.

struct PolicyTable {
  std::vector<std::vector<Matrix>> G;  // [player][step]
  std::vector<std::vector<Vector>> g;
  std::string source;

  std::size_t players() const { return G.size(); }
};

/// R^{-1} Lambda_T(t_k), R^{-1} rho_T(t_k) on the simulation grid (linear interpolation).
inline PolicyTable finite_policy(const FiniteRiccatiSolution& sol, const GameSpec& spec, const NoisePlan& plan) {
  if (plan.horizon() > sol.grid.T * (1.0 + 1e-9) + 1e-12)
    throw SpecError("simulate: plan horizon exceeds the solution horizon");
  PolicyTable pt;
  pt.source = "finite T=" + std::to_string(sol.grid.T);
  pt.G.resize(spec.N);
  pt.g.resize(spec.N);
  for (std::size_t i = 0; i < spec.N; ++i) {
    const Matrix Rinv = spd_inverse(spec.players[i].R);
    pt.G[i].reserve(plan.steps + 1);
    pt.g[i].reserve(plan.steps + 1);
    for (std::size_t k = 0; k <= plan.steps; ++k) {
      const double t = std::min(static_cast<double>(k) * plan.h, sol.grid.T);
      const auto at = locate(sol.grid, t);
      pt.G[i].push_back(Rinv * lerp_path(sol.players[i].Lambda, at));
      pt.g[i].push_back(Rinv * lerp_path(sol.players[i].rho, at));
    }
  }
  return pt;
}

inline PolicyTable ergodic_policy(const ErgodicSolution& erg, const GameSpec& spec, const NoisePlan& plan) {
  PolicyTable pt;
  pt.source = "ergodic";
  pt.G.resize(spec.N);
  pt.g.resize(spec.N);
  for (std::size_t i = 0; i < spec.N; ++i) {
    const Matrix Rinv = spd_inverse(spec.players[i].R);
    pt.G[i].assign(plan.steps + 1, Rinv * erg.players[i].Lambda);
    pt.g[i].assign(plan.steps + 1, Rinv * erg.players[i].rho);
  }
  return pt;
}

/// Observer signature: (path m, step k, time t, states, controls). States and
/// controls are flat arrays indexed [i * d + c].
using PathObserver = std::function<void(std::size_t, std::size_t, double, const double*, const double*)>;

/// Row-major copy of a d x d matrix.
inline std::vector<double> flat_rows(const Matrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return out;
}

/// Flattened policy: per step, per player, G row-major (d*d) then g (d).
struct FlatPolicy {
  std::size_t N = 0, d = 0, steps = 0;
  std::vector<double> data;
  const double* at(std::size_t k, std::size_t i) const { return data.data() + (k * N + i) * (d * d + d); }

  explicit FlatPolicy(const PolicyTable& pt) {
    N = pt.G.size();
    d = static_cast<std::size_t>(pt.G[0][0].rows());
    steps = pt.G[0].size() - 1;
    data.resize((steps + 1) * N * (d * d + d));
    for (std::size_t k = 0; k <= steps; ++k)
      for (std::size_t i = 0; i < N; ++i) {
        double* p = data.data() + (k * N + i) * (d * d + d);
        const auto G = flat_rows(pt.G[i][k]);
        std::copy(G.begin(), G.end(), p);
        for (std::size_t c = 0; c < d; ++c) p[d * d + c] = pt.g[i][k](static_cast<Eigen::Index>(c));
      }
  }
};

/// y = M x for a row-major d x d block.
inline void matvec(const double* M, const double* x, double* y, std::size_t d) {
  for (std::size_t r = 0; r < d; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += M[r * d + c] * x[c];
    y[r] = s;
  }
}

/// Runs all paths of one policy. The observer sees every step k = 0..steps.
inline void run_paths(const GameSpec& spec, const PolicyTable& pt, const NoisePlan& plan, const InitialLaw& law,
                      const PathObserver& observer) {
  plan.validate();
  if (pt.G.size() != spec.N || pt.G[0].size() < plan.steps + 1) throw SpecError("run_paths: policy table too short");
  const std::size_t N = spec.N;
  const std::size_t d = spec.d;
  const FlatPolicy fp(pt);
  const double sqh = std::sqrt(plan.h);
  std::vector<std::vector<double>> A(N), S(N);
  for (std::size_t i = 0; i < N; ++i) {
    A[i] = flat_rows(spec.players[i].A);
    S[i] = flat_rows(plan.noise_scale * sqh * spec.players[i].sigma);
  }
  std::vector<double> X(N * d), alpha(N * d), ax(d), z(d), sz(d);
  for (std::size_t m = 0; m < plan.M; ++m) {
    std::vector<NoiseStream> streams;
    streams.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
      const Vector x0 = law.draw(plan.seed, m, i);
      for (std::size_t c = 0; c < d; ++c) X[i * d + c] = x0(static_cast<Eigen::Index>(c));
      streams.emplace_back(plan.seed, m, i, d);
    }
    for (std::size_t k = 0;; ++k) {
      for (std::size_t i = 0; i < N; ++i) {
        const double* p = fp.at(k, i);
        matvec(p, &X[i * d], &alpha[i * d], d);
        for (std::size_t c = 0; c < d; ++c) alpha[i * d + c] += p[d * d + c];
      }
      observer(m, k, static_cast<double>(k) * plan.h, X.data(), alpha.data());
      if (k == plan.steps) break;
      for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t c = 0; c < d; ++c) z[c] = streams[i].normal(k, c);
        matvec(A[i].data(), &X[i * d], ax.data(), d);
        matvec(S[i].data(), z.data(), sz.data(), d);
        for (std::size_t c = 0; c < d; ++c)
          X[i * d + c] += (ax[c] - alpha[i * d + c]) * plan.h + sz[c];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Ensembles

struct TrajectoryEnsemble {
  std::size_t M = 0, N = 0, d = 0;
  std::vector<double> times;
  std::vector<std::size_t> steps;  // simulation step of each record
  std::vector<double> X;           // [m][r][i][c]
  std::vector<double> alpha;
  std::string provenance;
  NoisePlan plan;

  std::size_t records() const { return times.size(); }
  std::size_t offset(std::size_t m, std::size_t r, std::size_t i) const { return ((m * records() + r) * N + i) * d; }
  Vector state(std::size_t m, std::size_t r, std::size_t i) const {
    return Eigen::Map<const Vector>(X.data() + offset(m, r, i), static_cast<Eigen::Index>(d));
  }
  Vector control(std::size_t m, std::size_t r, std::size_t i) const {
    return Eigen::Map<const Vector>(alpha.data() + offset(m, r, i), static_cast<Eigen::Index>(d));
  }
};

/// Records every `stride`-th step (and the last one).
inline TrajectoryEnsemble simulate_with_policy(const GameSpec& spec, const PolicyTable& pt, const NoisePlan& plan,
                                               const InitialLaw& law, std::size_t stride, std::string provenance) {
  if (stride == 0) throw SpecError("simulate: stride must be positive");
  TrajectoryEnsemble ens;
  ens.M = plan.M;
  ens.N = spec.N;
  ens.d = spec.d;
  ens.plan = plan;
  ens.provenance = std::move(provenance);
  for (std::size_t k = 0; k <= plan.steps; ++k)
    if (k % stride == 0 || k == plan.steps) {
      ens.steps.push_back(k);
      ens.times.push_back(static_cast<double>(k) * plan.h);
    }
  const std::size_t total = ens.M * ens.records() * ens.N * ens.d;
  ens.X.assign(total, 0.0);
  ens.alpha.assign(total, 0.0);
  std::size_t next = 0;
  run_paths(spec, pt, plan, law,
            [&](std::size_t m, std::size_t k, double, const double* X, const double* a) {
              if (k == 0) next = 0;
              if (next >= ens.records() || ens.steps[next] != k) return;
              const std::size_t o = ens.offset(m, next, 0);
              std::copy(X, X + ens.N * ens.d, ens.X.begin() + static_cast<std::ptrdiff_t>(o));
              std::copy(a, a + ens.N * ens.d, ens.alpha.begin() + static_cast<std::ptrdiff_t>(o));
              ++next;
            });
  return ens;
}

inline std::size_t default_stride(const NoisePlan& plan, std::size_t max_records = 200) {
  return std::max<std::size_t>(1, (plan.steps + max_records - 1) / max_records);
}

inline TrajectoryEnsemble simulate_finite(const FiniteRiccatiSolution& sol, const GameSpec& spec,
                                          const NoisePlan& plan, const InitialLaw& law, std::size_t stride = 0) {
  return simulate_with_policy(spec, finite_policy(sol, spec, plan), plan, law,
                              stride ? stride : default_stride(plan), "finite T=" + std::to_string(sol.grid.T));
}

inline TrajectoryEnsemble simulate_ergodic(const ErgodicSolution& erg, const GameSpec& spec, const NoisePlan& plan,
                                           const InitialLaw& law, std::size_t stride = 0) {
  return simulate_with_policy(spec, ergodic_policy(erg, spec, plan), plan, law,
                              stride ? stride : default_stride(plan), "ergodic");
}

// ---------------------------------------------------------------------------
// Costs

/// Player i's running cost on flat state/control arrays, with the cost data
/// pre-flattened once.
class FlatCost {
 public:
  FlatCost(const GameSpec& spec, std::size_t i) : N_(spec.N), d_(spec.d), i_(i) {
    const Matrix Q = spec.cost.full_Q(i);
    const Vector xb = spec.cost.full_xbar(i);
    Q_ = flat_rows(Q);
    xbar_.assign(xb.data(), xb.data() + xb.size());
    R_ = flat_rows(spec.players[i].R);
    dev_.resize(N_ * d_);
  }
  double operator()(const double* X, const double* alpha) const { return eval(X, alpha + i_ * d_); }
  /// `a` is player i's own control (d entries).
  double eval(const double* X, const double* a) const {
    const std::size_t n = N_ * d_;
    double out = 0.0;
    for (std::size_t r = 0; r < d_; ++r)
      for (std::size_t c = 0; c < d_; ++c) out += 0.5 * a[r] * R_[r * d_ + c] * a[c];
    for (std::size_t r = 0; r < n; ++r) dev_[r] = X[r] - xbar_[r];
    for (std::size_t r = 0; r < n; ++r) {
      if (dev_[r] == 0.0) continue;
      double s = 0.0;
      const double* row = &Q_[r * n];
      for (std::size_t c = 0; c < n; ++c) s += row[c] * dev_[c];
      out += dev_[r] * s;
    }
    return out;
  }

 private:
  std::size_t N_, d_, i_;
  std::vector<double> Q_, xbar_, R_;
  mutable std::vector<double> dev_;
};

/// 1/2 a' R a + (X - xbar_i)' Q^i (X - xbar_i) for player i.
inline double running_cost(const GameSpec& spec, std::size_t i, const std::vector<Vector>& X, const Vector& a) {
  double out = 0.5 * a.dot(spec.players[i].R * a);
  const auto& c = spec.cost;
  std::vector<Vector> dev(spec.N);
  for (std::size_t j = 0; j < spec.N; ++j) dev[j] = X[j] - c.xbar[i][j];
  for (std::size_t j = 0; j < spec.N; ++j)
    for (std::size_t k = 0; k < spec.N; ++k) out += dev[j].dot(c.Q(i, j, k) * dev[k]);
  return out;
}

struct MeanEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t samples = 0;
};

inline MeanEstimate mean_and_se(const std::vector<double>& v) {
  MeanEstimate e;
  e.samples = v.size();
  if (v.empty()) return e;
  double s = 0.0;
  for (double x : v) s += x;
  e.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    e.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return e;
}

/// Time average of player i's running cost over recorded samples in
/// [window_lo, window_hi]; the standard error comes from per-path averages.
inline MeanEstimate running_cost_average(const TrajectoryEnsemble& ens, const GameSpec& spec, std::size_t i,
                                         double window_lo, double window_hi) {
  std::vector<std::size_t> rs;
  const double eps = 1e-9 * std::max(1.0, window_hi);
  for (std::size_t r = 0; r < ens.records(); ++r)
    if (ens.times[r] >= window_lo - eps && ens.times[r] <= window_hi + eps) rs.push_back(r);
  if (rs.empty()) throw SpecError("running_cost_average: empty window");
  std::vector<double> per_path(ens.M);
  std::vector<Vector> X(ens.N);
  for (std::size_t m = 0; m < ens.M; ++m) {
    double s = 0.0;
    for (std::size_t r : rs) {
      for (std::size_t j = 0; j < ens.N; ++j) X[j] = ens.state(m, r, j);
      s += running_cost(spec, i, X, ens.control(m, r, i));
    }
    per_path[m] = s / static_cast<double>(rs.size());
  }
  return mean_and_se(per_path);
}

/// Streaming variant: time average over every simulation step in the window
/// without storing paths.
inline MeanEstimate running_cost_average_streaming(const GameSpec& spec, const PolicyTable& pt,
                                                   const NoisePlan& plan, const InitialLaw& law, std::size_t i,
                                                   double window_lo, double window_hi) {
  std::vector<double> per_path(plan.M, 0.0);
  std::size_t count = 0;
  const double eps = 1e-9 * std::max(1.0, window_hi);
  for (std::size_t k = 0; k <= plan.steps; ++k) {
    const double t = static_cast<double>(k) * plan.h;
    if (t >= window_lo - eps && t <= window_hi + eps) ++count;
  }
  if (count == 0) throw SpecError("running_cost_average: empty window");
  const FlatCost cost(spec, i);
  run_paths(spec, pt, plan, law, [&](std::size_t m, std::size_t, double t, const double* X, const double* a) {
    if (t >= window_lo - eps && t <= window_hi + eps) per_path[m] += cost(X, a);
  });
  for (double& v : per_path) v /= static_cast<double>(count);
  return mean_and_se(per_path);
}

// ---------------------------------------------------------------------------
// Summary export

struct MomentSummary {
  Vector mean;
  Matrix cov;
  Vector mean_se;
  Matrix cov_se;
};

/// Empirical mean and covariance of player i at record r, with standard errors.
inline MomentSummary empirical_moments(const TrajectoryEnsemble& ens, std::size_t r, std::size_t i) {
  const auto d = static_cast<Eigen::Index>(ens.d);
  const auto M = static_cast<double>(ens.M);
  MomentSummary s{Vector::Zero(d), Matrix::Zero(d, d), Vector::Zero(d), Matrix::Zero(d, d)};
  for (std::size_t m = 0; m < ens.M; ++m) s.mean += ens.state(m, r, i);
  s.mean /= M;
  Matrix m4 = Matrix::Zero(d, d);
  for (std::size_t m = 0; m < ens.M; ++m) {
    const Vector x = ens.state(m, r, i) - s.mean;
    const Matrix p = x * x.transpose();
    s.cov += p;
    m4 += p.cwiseProduct(p);
  }
  const double denom = std::max(1.0, M - 1.0);
  s.cov /= denom;
  m4 /= M;
  for (Eigen::Index a = 0; a < d; ++a) {
    s.mean_se(a) = std::sqrt(s.cov(a, a) / M);
    for (Eigen::Index b = 0; b < d; ++b) s.cov_se(a, b) = std::sqrt(std::max(0.0, m4(a, b) - s.cov(a, b) * s.cov(a, b)) / M);
  }
  return s;
}

inline void write_summary_csv(const TrajectoryEnsemble& ens, const GameSpec& spec, std::ostream& os) {
  const auto d = static_cast<Eigen::Index>(ens.d);
  os << "t";
  for (std::size_t i = 0; i < ens.N; ++i) {
    for (Eigen::Index a = 0; a < d; ++a) os << ",mean" << i << "_" << a;
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) os << ",cov" << i << "_" << a << b;
    os << ",cost_mean" << i << ",cost_se" << i;
  }
  os << "\n" << std::setprecision(12);
  std::vector<Vector> X(ens.N);
  for (std::size_t r = 0; r < ens.records(); ++r) {
    os << ens.times[r];
    for (std::size_t i = 0; i < ens.N; ++i) {
      const auto mom = empirical_moments(ens, r, i);
      for (Eigen::Index a = 0; a < d; ++a) os << "," << mom.mean(a);
      for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) os << "," << mom.cov(a, b);
      std::vector<double> costs(ens.M);
      for (std::size_t m = 0; m < ens.M; ++m) {
        for (std::size_t j = 0; j < ens.N; ++j) X[j] = ens.state(m, r, j);
        costs[m] = running_cost(spec, i, X, ens.control(m, r, i));
      }
      const auto ce = mean_and_se(costs);
      os << "," << ce.mean << "," << ce.se;
    }
    os << "\n";
  }
}

}  // namespace lqgtp
