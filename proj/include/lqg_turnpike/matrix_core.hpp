// Dense linear-algebra kernels shared by the game solvers.
//
// Everything here works on dynamic-size Eigen matrices. Sizes of interest are
// small (d <= 16 per player, N*d <= ~256 stacked), so the algorithms favour
// robustness over asymptotic speed.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace lqgtp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Invalid problem data or configuration (bad dimensions, non-SPD input, ...).
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a certified answer.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Relative threshold used by every SPD test: lambda_min > kSpdRelTol * lambda_max.
inline constexpr double kSpdRelTol = 1e-12;

struct SymEig {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal columns
};

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double min_singular_value(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

inline SymEig sym_eig(const Matrix& m) {
  if (m.rows() != m.cols()) throw SpecError("sym_eig: matrix not square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  if (es.info() != Eigen::Success) throw NumericError("sym_eig: eigen solver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

inline double lambda_min(const Matrix& m) { return sym_eig(m).eigenvalues(0); }
inline double lambda_max(const Matrix& m) {
  auto e = sym_eig(m);
  return e.eigenvalues(e.eigenvalues.size() - 1);
}

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// Symmetric positive definite in the scale-invariant sense
/// lambda_min > 1e-12 * lambda_max (and lambda_max > 0).
inline bool is_spd(const Matrix& m) {
  if (m.rows() != m.cols() || m.size() == 0) return false;
  if (!m.allFinite() || !is_symmetric(m, 1e-10)) return false;
  const Vector ev = sym_eig(m).eigenvalues;
  const double hi = ev(ev.size() - 1);
  return hi > 0.0 && ev(0) > kSpdRelTol * hi;
}

/// Positive semidefinite up to a relative tolerance.
inline bool is_psd(const Matrix& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const Vector ev = sym_eig(m).eigenvalues;
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  return ev(0) >= -rel_tol * scale;
}

/// Unique SPD square root.
inline Matrix spd_sqrt(const Matrix& m) {
  if (!is_spd(m)) throw SpecError("spd_sqrt: input is not symmetric positive definite");
  const SymEig e = sym_eig(m);
  const Matrix s = e.eigenvectors * e.eigenvalues.cwiseSqrt().asDiagonal() *
                   e.eigenvectors.transpose();
  return symmetrize(s);
}

/// Inverse of an SPD matrix via its eigendecomposition, symmetric by construction.
inline Matrix spd_inverse(const Matrix& m) {
  if (!is_spd(m)) throw SpecError("spd_inverse: input is not symmetric positive definite");
  const SymEig e = sym_eig(m);
  return symmetrize(e.eigenvectors * e.eigenvalues.cwiseInverse().asDiagonal() *
                    e.eigenvectors.transpose());
}

/// Maximum real part over the spectrum.
inline double spectral_abscissa(const Matrix& m) {
  if (m.rows() != m.cols()) throw SpecError("spectral_abscissa: matrix not square");
  if (m.rows() == 1) return m(0, 0);
  Eigen::EigenSolver<Matrix> es(m, false);
  if (es.info() != Eigen::Success) throw NumericError("spectral_abscissa: eigen solver failed");
  return es.eigenvalues().real().maxCoeff();
}

inline bool is_hurwitz(const Matrix& m) { return spectral_abscissa(m) < 0.0; }

/// Solves A x = b with full-pivot LU and certifies the residual.
inline Matrix solve_linear(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw SpecError("solve_linear: dimension mismatch");
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw NumericError("solve_linear: singular system");
  Matrix x = lu.solve(b);
  const double scale = a.norm() * x.norm() + b.norm();
  if ((a * x - b).norm() > 1e-10 * std::max(scale, 1e-300))
    throw NumericError("solve_linear: residual above tolerance (ill-conditioned system)");
  return x;
}

/// Solves F^T X + X F = -W for X. Requires F Hurwitz; the Kronecker-vectorised
/// system has dimension d^2.
inline Matrix solve_lyapunov(const Matrix& f, const Matrix& w) {
  const Eigen::Index d = f.rows();
  if (f.cols() != d || w.rows() != d || w.cols() != d)
    throw SpecError("solve_lyapunov: dimension mismatch");
  if (!is_hurwitz(f)) throw NumericError("solve_lyapunov: F is not Hurwitz");
  const Eigen::Index n = d * d;
  Matrix big = Matrix::Zero(n, n);
  // vec(F^T X) = (I kron F^T) vec X ; vec(X F) = (F^T kron I) vec X  (column-major vec)
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index r = 0; r < d; ++r) {
      const Eigen::Index row = c * d + r;
      for (Eigen::Index k = 0; k < d; ++k) {
        big(row, c * d + k) += f(k, r);  // (F^T X)(r,c) = sum_k F(k,r) X(k,c)
        big(row, k * d + r) += f(k, c);  // (X F)(r,c)   = sum_k X(r,k) F(k,c)
      }
    }
  }
  Vector rhs(n);
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index r = 0; r < d; ++r) rhs(c * d + r) = -w(r, c);
  const Vector x = solve_linear(big, rhs);
  Matrix out(d, d);
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index r = 0; r < d; ++r) out(r, c) = x(c * d + r);
  if (is_symmetric(w, 1e-14)) out = symmetrize(out);
  return out;
}

/// Matrix exponential by scaling and squaring with the [13/13] Pade approximant.
inline Matrix matrix_exponential(const Matrix& m) {
  if (m.rows() != m.cols()) throw SpecError("matrix_exponential: matrix not square");
  const Eigen::Index d = m.rows();
  if (!m.allFinite()) throw NumericError("matrix_exponential: non-finite input");
  const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
  if (norm1 > 700.0 * 64.0)
    throw NumericError("matrix_exponential: norm too large, result would overflow");

  static constexpr double b[] = {64764752532480000.0,
                                 32382376266240000.0,
                                 7771770303897600.0,
                                 1187353796428800.0,
                                 129060195264000.0,
                                 10559470521600.0,
                                 670442572800.0,
                                 33522128640.0,
                                 1323241920.0,
                                 40840800.0,
                                 960960.0,
                                 16380.0,
                                 182.0,
                                 1.0};
  constexpr double theta13 = 5.371920351148152;

  int squarings = 0;
  if (norm1 > theta13) squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
  const Matrix a = m / std::ldexp(1.0, squarings);
  const Matrix ident = Matrix::Identity(d, d);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                        b[3] * a2 + b[1] * ident);
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
                   b[2] * a2 + b[0] * ident;
  Eigen::PartialPivLU<Matrix> lu(v - u);
  Matrix r = lu.solve(v + u);
  for (int s = 0; s < squarings; ++s) r = r * r;
  if (!r.allFinite()) throw NumericError("matrix_exponential: overflow");
  return r;
}

/// Real banded matrix with partial-pivoting LU, LAPACK gbtrf-style storage.
///
/// Used for the global (mu, rho) two-point boundary value system, whose
/// node-ordered discretisation has bandwidth proportional to N*d.
class BandedMatrix {
 public:
  BandedMatrix(std::size_t n, std::size_t kl, std::size_t ku)
      : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1), ab_(ldab_ * n, 0.0) {}

  std::size_t size() const { return n_; }

  double& at(std::size_t row, std::size_t col) {
    if (row >= n_ || col >= n_ || row + ku_ < col || col + kl_ < row)
      throw std::out_of_range("BandedMatrix: entry outside band");
    return ab_[col * ldab_ + (kl_ + ku_ + row - col)];
  }

  /// Factorises in place and solves for one right-hand side.
  Vector solve(Vector rhs) {
    if (static_cast<std::size_t>(rhs.size()) != n_) throw SpecError("BandedMatrix: rhs size");
    factorize();
    // forward: apply permutation and L
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t p = piv_[j];
      if (p != j) std::swap(rhs(j), rhs(p));
      const std::size_t last = std::min(n_ - 1, j + kl_);
      for (std::size_t i = j + 1; i <= last; ++i) rhs(i) -= elem(i, j) * rhs(j);
    }
    // backward with U (upper bandwidth kl+ku after pivoting)
    const std::size_t kuu = kl_ + ku_;
    for (std::size_t jj = n_; jj-- > 0;) {
      rhs(jj) /= elem(jj, jj);
      const std::size_t first = jj > kuu ? jj - kuu : 0;
      for (std::size_t i = first; i < jj; ++i) rhs(i) -= elem(i, jj) * rhs(jj);
    }
    return rhs;
  }

 private:
  double& elem(std::size_t row, std::size_t col) {
    return ab_[col * ldab_ + (kl_ + ku_ + row - col)];
  }

  void factorize() {
    if (factored_) return;
    piv_.assign(n_, 0);
    const std::size_t kuu = kl_ + ku_;
    double max_abs = 0.0;
    for (double v : ab_) max_abs = std::max(max_abs, std::abs(v));
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t last = std::min(n_ - 1, j + kl_);
      std::size_t p = j;
      double best = std::abs(elem(j, j));
      for (std::size_t i = j + 1; i <= last; ++i) {
        if (std::abs(elem(i, j)) > best) {
          best = std::abs(elem(i, j));
          p = i;
        }
      }
      piv_[j] = p;
      if (best <= 1e-14 * max_abs || best == 0.0)
        throw NumericError("BandedMatrix: singular discrete system");
      const std::size_t col_last = std::min(n_ - 1, j + kuu);
      if (p != j)
        for (std::size_t c = j; c <= col_last; ++c) std::swap(elem(j, c), elem(p, c));
      const double pivot = elem(j, j);
      for (std::size_t i = j + 1; i <= last; ++i) {
        const double l = elem(i, j) / pivot;
        elem(i, j) = l;
        if (l == 0.0) continue;
        for (std::size_t c = j + 1; c <= col_last; ++c) elem(i, c) -= l * elem(j, c);
      }
    }
    factored_ = true;
  }

  std::size_t n_, kl_, ku_, ldab_;
  std::vector<double> ab_;
  std::vector<std::size_t> piv_;
  bool factored_ = false;
};

}  // namespace lqgtp
