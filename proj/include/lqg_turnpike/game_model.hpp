// Problem data for N-player linear-quadratic-Gaussian games.
//
//   dX^i = (A^i X^i - alpha^i) dt + sigma^i dW^i,   X^i(0) ~ N(mu0^i, (Sigma0^i)^{-1})
//   cost^i = E int ( 1/2 alpha^i' R^i alpha^i + (X - xbar_i)' Q^i (X - xbar_i) ) dt
//
// Q^i is stored by d x d blocks Q^i_{jk}; xbar_i by the per-player references
// xbar_i^j.

#pragma once

#include "lqg_turnpike/matrix_core.hpp"

#include <json.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lqgtp {

struct PlayerSpec {
  Matrix A;        // drift
  Matrix sigma;    // diffusion, invertible
  Matrix varsigma; // 1/2 sigma sigma^T, cached by make_player / refresh
  Matrix R;        // control weight, SPD
  Vector mu0;      // initial mean
  Matrix Sigma0;   // initial precision, SPD

  void refresh() { varsigma = 0.5 * sigma * sigma.transpose(); }
};

inline PlayerSpec make_player(Matrix A, Matrix sigma, Matrix R, Vector mu0, Matrix Sigma0) {
  PlayerSpec p{std::move(A), std::move(sigma), Matrix{}, std::move(R), std::move(mu0),
               std::move(Sigma0)};
  p.refresh();
  return p;
}

struct CostSpec {
  // Qblocks[i][j][k] = Q^i_{jk}; xbar[i][j] = xbar_i^j.
  std::vector<std::vector<std::vector<Matrix>>> Qblocks;
  std::vector<std::vector<Vector>> xbar;

  const Matrix& Q(std::size_t i, std::size_t j, std::size_t k) const { return Qblocks[i][j][k]; }

  /// Player i's full Nd x Nd weight matrix.
  Matrix full_Q(std::size_t i) const {
    const std::size_t n = Qblocks[i].size();
    const Eigen::Index d = Qblocks[i][0][0].rows();
    Matrix out(static_cast<Eigen::Index>(n) * d, static_cast<Eigen::Index>(n) * d);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        out.block(static_cast<Eigen::Index>(j) * d, static_cast<Eigen::Index>(k) * d, d, d) =
            Qblocks[i][j][k];
    return out;
  }

  /// Player i's stacked reference vector xbar_i in R^{Nd}.
  Vector full_xbar(std::size_t i) const {
    const std::size_t n = xbar[i].size();
    const Eigen::Index d = xbar[i][0].size();
    Vector out(static_cast<Eigen::Index>(n) * d);
    for (std::size_t j = 0; j < n; ++j) out.segment(static_cast<Eigen::Index>(j) * d, d) = xbar[i][j];
    return out;
  }
};

struct GameSpec {
  std::size_t N = 0;
  std::size_t d = 0;
  std::vector<PlayerSpec> players;
  CostSpec cost;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(d); }
  Eigen::Index stacked_dim() const { return static_cast<Eigen::Index>(N * d); }
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Structural checks only; violations are returned, never thrown.
inline ValidationResult validate_spec(const GameSpec& spec) {
  ValidationResult res;
  auto bad = [&](std::string msg) { res.violations.push_back(std::move(msg)); };
  if (spec.N < 2) bad("N must be at least 2");
  if (spec.d < 1) bad("d must be at least 1");
  if (spec.players.size() != spec.N) bad("players list has " + std::to_string(spec.players.size()) +
                                         " entries, expected N=" + std::to_string(spec.N));
  const Eigen::Index d = spec.dim();
  auto square_d = [&](const Matrix& m) { return m.rows() == d && m.cols() == d; };

  for (std::size_t i = 0; i < spec.players.size(); ++i) {
    const auto& p = spec.players[i];
    const std::string tag = "player " + std::to_string(i) + ": ";
    if (!square_d(p.A)) bad(tag + "A has wrong shape");
    if (!square_d(p.sigma)) {
      bad(tag + "sigma has wrong shape");
    } else {
      const Eigen::JacobiSVD<Matrix> svd(p.sigma);
      const auto& sv = svd.singularValues();
      if (!(sv(0) > 0.0) || sv(sv.size() - 1) <= 1e-12 * sv(0)) bad(tag + "sigma not invertible");
      if (!square_d(p.varsigma) || (p.varsigma - 0.5 * p.sigma * p.sigma.transpose()).norm() != 0.0)
        bad(tag + "varsigma inconsistent with sigma");
    }
    if (!square_d(p.R) || !is_spd(p.R)) bad(tag + "R not SPD");
    if (p.mu0.size() != d) bad(tag + "mu0 has wrong length");
    if (!square_d(p.Sigma0) || !is_spd(p.Sigma0)) bad(tag + "Sigma0 not SPD");
  }

  const auto& c = spec.cost;
  if (c.Qblocks.size() != spec.N || c.xbar.size() != spec.N) {
    bad("cost arrays must have N entries");
    return res;
  }
  for (std::size_t i = 0; i < spec.N; ++i) {
    const std::string tag = "Q^" + std::to_string(i) + ": ";
    if (c.Qblocks[i].size() != spec.N || c.xbar[i].size() != spec.N) {
      bad(tag + "block grid must be N x N");
      continue;
    }
    bool shapes = true;
    for (std::size_t j = 0; j < spec.N; ++j) {
      if (c.xbar[i][j].size() != d) bad("xbar_" + std::to_string(i) + "^" + std::to_string(j) + " has wrong length");
      if (c.Qblocks[i][j].size() != spec.N) {
        shapes = false;
        continue;
      }
      for (std::size_t k = 0; k < spec.N; ++k)
        if (!square_d(c.Qblocks[i][j][k])) shapes = false;
    }
    if (!shapes) {
      bad(tag + "block has wrong shape");
      continue;
    }
    bool sym = true;
    for (std::size_t j = 0; j < spec.N && sym; ++j)
      for (std::size_t k = 0; k < spec.N && sym; ++k) {
        const Matrix diff = c.Qblocks[i][j][k].transpose() - c.Qblocks[i][k][j];
        const double scale = std::max(1.0, c.Qblocks[i][j][k].cwiseAbs().maxCoeff());
        if (diff.cwiseAbs().maxCoeff() > 1e-12 * scale) sym = false;
      }
    if (!sym) bad(tag + "not symmetric");
    if (!is_spd(c.Qblocks[i][i][i])) bad(tag + "diagonal block Q^i_ii not SPD");
  }
  return res;
}

inline void require_valid(const GameSpec& spec) {
  const auto v = validate_spec(spec);
  if (!v.ok()) {
    std::string msg = "invalid game spec:";
    for (const auto& s : v.violations) msg += " [" + s + "]";
    throw SpecError(msg);
  }
}

struct AssembledMatrices {
  Matrix boldR;  // blockdiag (R^i)^{-1}
  Matrix boldQ;  // off-diagonal blocks Q^i_{ij}, zero diagonal blocks
  Matrix boldM;  // Q^i_{ij} + 1/2 delta_ij (A^i)' R^i A^i
  Vector qvec;   // block i: sum_j Q^i_{ij} xbar_i^j
};

inline AssembledMatrices assemble(const GameSpec& spec) {
  const Eigen::Index d = spec.dim();
  const Eigen::Index nd = spec.stacked_dim();
  if (spec.players.size() != spec.N || spec.cost.Qblocks.size() != spec.N)
    throw SpecError("assemble: dimension mismatch");
  AssembledMatrices out{Matrix::Zero(nd, nd), Matrix::Zero(nd, nd), Matrix::Zero(nd, nd),
                        Vector::Zero(nd)};
  for (std::size_t i = 0; i < spec.N; ++i) {
    const auto& p = spec.players[i];
    if (p.R.rows() != d || p.A.rows() != d) throw SpecError("assemble: dimension mismatch");
    const Eigen::Index oi = static_cast<Eigen::Index>(i) * d;
    out.boldR.block(oi, oi, d, d) = spd_inverse(p.R);
    for (std::size_t j = 0; j < spec.N; ++j) {
      const Eigen::Index oj = static_cast<Eigen::Index>(j) * d;
      const Matrix& qij = spec.cost.Q(i, i, j);
      if (qij.rows() != d || qij.cols() != d) throw SpecError("assemble: dimension mismatch");
      if (i != j) out.boldQ.block(oi, oj, d, d) = qij;
      out.boldM.block(oi, oj, d, d) = qij;
      out.qvec.segment(oi, d) += qij * spec.cost.xbar[i][j];
    }
    out.boldM.block(oi, oi, d, d) += 0.5 * p.A.transpose() * p.R * p.A;
  }
  return out;
}

/// F_1^i(y^{-i}) = -Q^i_ii xbar_i^i + sum_{j != i} Q^i_ij (y^j - xbar_i^j).
/// `y` is indexed by all players; entry i is ignored.
inline Vector eval_F1(const GameSpec& spec, std::size_t i, const std::vector<Vector>& y) {
  const auto& c = spec.cost;
  Vector out = -c.Q(i, i, i) * c.xbar[i][i];
  for (std::size_t j = 0; j < spec.N; ++j)
    if (j != i) out += c.Q(i, i, j) * (y[j] - c.xbar[i][j]);
  return out;
}

/// How the trace term of F_0^i picks covariances: each opponent's own law
/// (per_player), or player i's covariance in every slot (paper_literal).
enum class F0Mode { per_player, paper_literal };

/// F_0^i(y^{-i}, covariances). `covs[j]` is player j's covariance (not a precision);
/// entry i is ignored.
inline double eval_F0(const GameSpec& spec, std::size_t i, const std::vector<Vector>& y,
                      const std::vector<Matrix>& covs) {
  const auto& c = spec.cost;
  const Vector& xi = c.xbar[i][i];
  double out = xi.dot(c.Q(i, i, i) * xi);
  std::vector<Vector> dev(spec.N);
  for (std::size_t j = 0; j < spec.N; ++j)
    if (j != i) dev[j] = y[j] - c.xbar[i][j];
  for (std::size_t j = 0; j < spec.N; ++j) {
    if (j == i) continue;
    out -= xi.dot(c.Q(i, i, j) * dev[j]);
    out -= dev[j].dot(c.Q(i, j, i) * xi);
  }
  for (std::size_t j = 0; j < spec.N; ++j) {
    if (j == i) continue;
    if (!is_spd(covs[j])) throw SpecError("eval_F0: covariance not SPD");
    out += (c.Q(i, j, j) * covs[j]).trace();
    for (std::size_t k = 0; k < spec.N; ++k) {
      if (k == i) continue;
      out += dev[j].dot(c.Q(i, j, k) * dev[k]);
    }
  }
  return out;
}

/// Covariance list handed to eval_F0 for player i under `mode`.
inline std::vector<Matrix> f0_covariances(F0Mode mode, std::size_t i, const std::vector<Matrix>& covs) {
  if (mode == F0Mode::per_player) return covs;
  return std::vector<Matrix>(covs.size(), covs[i]);
}

// ---------------------------------------------------------------------------
// Example families

enum class ExampleKind { symmetric, consensus };

/// Scalar parameters for the built-in families. Matrix quantities are the
/// scalar times I_d unless the matrix overrides are set.
struct ExampleParams {
  double A = -1.0;
  double a1 = 1.0;       // sigma = a1 I
  double a2 = 1.0;       // R = a2 I
  double Q = 0.5;        // Q^i_ii = Q I
  double B = 0.0;        // symmetric: Q^i_ij
  double C = 0.0;        // symmetric: Q^i_jj, j != i
  double D = 0.0;        // symmetric: Q^i_jk, j,k != i, j != k
  double xbar = 0.0;     // symmetric: every reference entry
  double mu0 = 0.0;
  double Sigma0 = 2.0;
  bool uniform = false;  // symmetric: B/N, C/(N-1), D/(N-1)^2
  std::optional<Matrix> A_matrix;
  std::optional<Matrix> Q_matrix;
  std::vector<Vector> mu0_per_player;  // optional overrides, one per player
};

inline ExampleParams parse_example_params(const std::map<std::string, double>& kv) {
  ExampleParams p;
  for (const auto& [key, value] : kv) {
    if (key == "A") p.A = value;
    else if (key == "a1") p.a1 = value;
    else if (key == "a2") p.a2 = value;
    else if (key == "Q") p.Q = value;
    else if (key == "B") p.B = value;
    else if (key == "C") p.C = value;
    else if (key == "D") p.D = value;
    else if (key == "xbar") p.xbar = value;
    else if (key == "mu0") p.mu0 = value;
    else if (key == "Sigma0") p.Sigma0 = value;
    else if (key == "uniform") p.uniform = value != 0.0;
    else throw SpecError("unknown example parameter '" + key + "'");
  }
  return p;
}

inline GameSpec build_example(ExampleKind kind, std::size_t N, std::size_t d,
                              const ExampleParams& prm) {
  if (N < 2) throw SpecError("build_example: N must be at least 2");
  if (d < 1) throw SpecError("build_example: d must be at least 1");
  if (!(prm.a2 > 0.0)) throw SpecError("build_example: a2 must be positive");
  if (prm.a1 == 0.0) throw SpecError("build_example: a1 must be nonzero");
  const Eigen::Index dd = static_cast<Eigen::Index>(d);
  const Matrix I = Matrix::Identity(dd, dd);
  const Matrix Qm = prm.Q_matrix ? *prm.Q_matrix : Matrix(prm.Q * I);
  if (!is_spd(Qm)) throw SpecError("build_example: Q must be SPD");
  const Matrix Am = prm.A_matrix ? *prm.A_matrix : Matrix(prm.A * I);
  if (Am.rows() != dd || Qm.rows() != dd) throw SpecError("build_example: matrix override shape");
  if (!prm.mu0_per_player.empty() && prm.mu0_per_player.size() != N)
    throw SpecError("build_example: mu0 override needs one entry per player");

  GameSpec spec;
  spec.N = N;
  spec.d = d;
  for (std::size_t i = 0; i < N; ++i) {
    Vector mu0 = prm.mu0_per_player.empty() ? Vector(Vector::Constant(dd, prm.mu0))
                                            : prm.mu0_per_player[i];
    spec.players.push_back(make_player(Am, prm.a1 * I, prm.a2 * I, mu0, prm.Sigma0 * I));
  }
  const Matrix Z = Matrix::Zero(dd, dd);
  spec.cost.Qblocks.assign(N, std::vector<std::vector<Matrix>>(N, std::vector<Matrix>(N, Z)));
  spec.cost.xbar.assign(N, std::vector<Vector>(N, Vector::Zero(dd)));
  const double n1 = static_cast<double>(N - 1);

  for (std::size_t i = 0; i < N; ++i) {
    auto& q = spec.cost.Qblocks[i];
    q[i][i] = Qm;
    if (kind == ExampleKind::consensus) {
      for (std::size_t j = 0; j < N; ++j) {
        if (j == i) continue;
        q[i][j] = -Qm / n1;
        q[j][i] = -Qm / n1;
        q[j][j] = Qm / n1;
      }
    } else {
      const double b = prm.uniform ? prm.B / static_cast<double>(N) : prm.B;
      const double c = prm.uniform ? prm.C / n1 : prm.C;
      const double dcoef = prm.uniform ? prm.D / (n1 * n1) : prm.D;
      if (b < 0.0) throw SpecError("build_example: B must be nonnegative");
      for (std::size_t j = 0; j < N; ++j) {
        if (j == i) continue;
        q[i][j] = b * I;
        q[j][i] = b * I;
        q[j][j] = c * I;
        for (std::size_t k = 0; k < N; ++k)
          if (k != i && k != j) q[j][k] = dcoef * I;
      }
      for (std::size_t j = 0; j < N; ++j) spec.cost.xbar[i][j] = Vector::Constant(dd, prm.xbar);
    }
  }
  return spec;
}

/// The two-player scalar consensus fixture used throughout the tests:
/// A=-1, sigma=1, R=1, Q=1/2, xbar=0, mu0=0, Sigma0=2.
inline GameSpec fixture_a() {
  return build_example(ExampleKind::consensus, 2, 1, ExampleParams{});
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < v.size(); ++r) out.push_back(v(r));
  return out;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw SpecError("matrix must be a non-empty nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array()) throw SpecError("matrix rows must be arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw SpecError("matrix rows must have equal length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) throw SpecError("vector must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t r = 0; r < j.size(); ++r) v(static_cast<Eigen::Index>(r)) = j[r].get<double>();
  return v;
}

inline nlohmann::json spec_to_json(const GameSpec& spec) {
  nlohmann::json out;
  out["N"] = spec.N;
  out["d"] = spec.d;
  out["players"] = nlohmann::json::array();
  for (const auto& p : spec.players) {
    out["players"].push_back({{"A", matrix_to_json(p.A)},
                              {"sigma", matrix_to_json(p.sigma)},
                              {"R", matrix_to_json(p.R)},
                              {"mu0", vector_to_json(p.mu0)},
                              {"Sigma0", matrix_to_json(p.Sigma0)}});
  }
  nlohmann::json q = nlohmann::json::array();
  nlohmann::json xb = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.N; ++i) {
    nlohmann::json qi = nlohmann::json::array();
    nlohmann::json xi = nlohmann::json::array();
    for (std::size_t j = 0; j < spec.N; ++j) {
      nlohmann::json qij = nlohmann::json::array();
      for (std::size_t k = 0; k < spec.N; ++k) qij.push_back(matrix_to_json(spec.cost.Q(i, j, k)));
      qi.push_back(std::move(qij));
      xi.push_back(vector_to_json(spec.cost.xbar[i][j]));
    }
    q.push_back(std::move(qi));
    xb.push_back(std::move(xi));
  }
  out["cost"] = {{"Qblocks", std::move(q)}, {"xbar", std::move(xb)}};
  return out;
}

/// Parses a spec document. Shape problems raise SpecError; semantic problems
/// (SPD-ness, symmetry) are left to validate_spec.
inline GameSpec spec_from_json(const nlohmann::json& j) {
  try {
    GameSpec spec;
    spec.N = j.at("N").get<std::size_t>();
    spec.d = j.at("d").get<std::size_t>();
    for (const auto& pj : j.at("players")) {
      spec.players.push_back(make_player(matrix_from_json(pj.at("A")), matrix_from_json(pj.at("sigma")),
                                         matrix_from_json(pj.at("R")), vector_from_json(pj.at("mu0")),
                                         matrix_from_json(pj.at("Sigma0"))));
    }
    const auto& cj = j.at("cost");
    for (const auto& qi : cj.at("Qblocks")) {
      std::vector<std::vector<Matrix>> rows;
      for (const auto& qij : qi) {
        std::vector<Matrix> row;
        for (const auto& qijk : qij) row.push_back(matrix_from_json(qijk));
        rows.push_back(std::move(row));
      }
      spec.cost.Qblocks.push_back(std::move(rows));
    }
    for (const auto& xi : cj.at("xbar")) {
      std::vector<Vector> row;
      for (const auto& xij : xi) row.push_back(vector_from_json(xij));
      spec.cost.xbar.push_back(std::move(row));
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed spec document: ") + e.what());
  }
}

}  // namespace lqgtp
