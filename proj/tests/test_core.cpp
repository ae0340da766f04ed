// Deterministic tests: matrix kernels, game model, Riccati solvers, envelope
// fits, assumption checks.

#include "lqg_turnpike/lqg_turnpike.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lqgtp;

namespace {

const double kSqrt2 = std::sqrt(2.0);

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

Matrix random_spd(std::mt19937_64& rng, Eigen::Index d) {
  const Matrix g = random_matrix(rng, d, d);
  return g * g.transpose() + 0.5 * Matrix::Identity(d, d);
}

/// Hand-derived tanh closed form for FIX-A.
double fixture_lambda(double T, double t) {
  return kSqrt2 * std::tanh(kSqrt2 * (T - t) + std::atanh(1.0 / kSqrt2)) - 1.0;
}

GameSpec symmetric_fixture(std::size_t N = 2, double B = 0.1, double xbar = 1.0) {
  ExampleParams p;
  p.B = B;
  p.xbar = xbar;
  return build_example(ExampleKind::symmetric, N, 1, p);
}

}  // namespace

// ---------------------------------------------------------------------------
// matrix_core

TEST(MatrixCore, SpdSqrtExamples) {
  EXPECT_LE((spd_sqrt(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-15);
  Matrix m(2, 2);
  m << 4, 0, 0, 9;
  Matrix s(2, 2);
  s << 2, 0, 0, 3;
  EXPECT_LE((spd_sqrt(m) - s).norm(), 1e-14);
  m << 2, 1, 1, 2;
  const Matrix r = spd_sqrt(m);
  EXPECT_LE((r * r - m).norm(), 1e-12);
}

TEST(MatrixCore, SpdSqrtPropertyRandom) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = 1 + trial % 8;
    const Matrix m = random_spd(rng, d);
    const Matrix r = spd_sqrt(m);
    EXPECT_LE((r * r - m).norm(), 1e-12 * m.norm());
    EXPECT_TRUE(is_symmetric(r));
  }
}

TEST(MatrixCore, ExponentialExamples) {
  EXPECT_LE((matrix_exponential(Matrix::Zero(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-15);
  EXPECT_NEAR(matrix_exponential(scalar(-1.0))(0, 0), std::exp(-1.0), 1e-15);
  Matrix n(2, 2);
  n << 0, 1, 0, 0;
  Matrix e(2, 2);
  e << 1, 1, 0, 1;
  EXPECT_LE((matrix_exponential(n) - e).norm(), 1e-15);
  // rotation generator
  Matrix w(2, 2);
  w << 0, -2, 2, 0;
  Matrix rot(2, 2);
  rot << std::cos(2.0), -std::sin(2.0), std::sin(2.0), std::cos(2.0);
  EXPECT_LE((matrix_exponential(w) - rot).norm(), 1e-13);
}

TEST(MatrixCore, ExponentialInverseProperty) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index d = 1 + trial % 6;
    Matrix m = random_matrix(rng, d, d);
    m *= (10.0 * (trial + 1) / 40.0) / std::max(1e-12, spectral_norm(m));
    const Matrix p = matrix_exponential(m) * matrix_exponential(-m);
    EXPECT_LE((p - Matrix::Identity(d, d)).norm(), 1e-9) << "trial " << trial;
  }
}

TEST(MatrixCore, LyapunovAndFriends) {
  EXPECT_NEAR(solve_lyapunov(scalar(-1.0), scalar(1.0))(0, 0), 0.5, 1e-15);
  Matrix dg = Matrix::Zero(2, 2);
  dg.diagonal() << -kSqrt2, -3.0;
  EXPECT_NEAR(spectral_abscissa(scalar(-kSqrt2)), -kSqrt2, 1e-15);
  EXPECT_NEAR(spectral_abscissa(dg), -kSqrt2, 1e-14);
  const Vector b = Vector::LinSpaced(4, 1.0, 4.0);
  EXPECT_LE((solve_linear(Matrix::Identity(4, 4), b) - b).norm(), 0.0);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + trial % 5;
    const Matrix F = random_matrix(rng, d, d) - 4.0 * Matrix::Identity(d, d);
    if (!is_hurwitz(F)) continue;
    const Matrix W = random_spd(rng, d);
    const Matrix X = solve_lyapunov(F, W);
    EXPECT_LE((F.transpose() * X + X * F + W).norm(), 1e-10 * W.norm());
    EXPECT_LE((X - X.transpose()).norm(), 1e-12 * X.norm());
  }
}

TEST(MatrixCore, ErrorPaths) {
  Matrix sing = Matrix::Zero(2, 2);
  sing(0, 0) = 1.0;
  EXPECT_THROW(solve_linear(sing, Vector::Ones(2)), NumericError);
  EXPECT_THROW(solve_lyapunov(scalar(1.0), scalar(1.0)), NumericError);
  EXPECT_THROW(spd_inverse(scalar(-1.0)), SpecError);
  EXPECT_FALSE(is_spd(scalar(0.0)));
  Matrix nearly(2, 2);
  nearly << 1.0, 0.0, 0.0, 1e-13;
  EXPECT_FALSE(is_spd(nearly));
  EXPECT_TRUE(is_psd(nearly));
}

TEST(MatrixCore, BandedMatchesDense) {
  std::mt19937_64 rng(5);
  const std::size_t n = 30, kl = 3, ku = 2;
  BandedMatrix band(n, kl, ku);
  Matrix dense = Matrix::Zero(n, n);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      if (r <= c + kl && c <= r + ku) {
        const double v = nd(rng) + (r == c ? 0.1 : 0.0);
        band.at(r, c) = v;
        dense(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      }
  const Vector rhs = random_matrix(rng, n, 1);
  const Vector x = band.solve(rhs);
  EXPECT_LE((dense * x - rhs).norm(), 1e-10 * (dense.norm() * x.norm() + rhs.norm()));
  EXPECT_THROW(band.at(0, n - 1), std::out_of_range);
}

// ---------------------------------------------------------------------------
// game_model

TEST(GameModel, FixtureValidates) {
  const auto spec = fixture_a();
  EXPECT_TRUE(validate_spec(spec).ok());
  EXPECT_EQ(spec.N, 2u);
  EXPECT_EQ(spec.d, 1u);
}

TEST(GameModel, ValidationMessages) {
  auto spec = fixture_a();
  spec.players[0].R = scalar(-1.0);
  auto v = validate_spec(spec);
  ASSERT_FALSE(v.ok());
  EXPECT_NE(v.violations.front().find("R not SPD"), std::string::npos);

  spec = fixture_a();
  spec.cost.Qblocks[0][0][1] = scalar(0.3);
  v = validate_spec(spec);
  ASSERT_FALSE(v.ok());
  bool found = false;
  for (const auto& s : v.violations) found |= s.find("not symmetric") != std::string::npos;
  EXPECT_TRUE(found);

  spec = fixture_a();
  spec.cost.Qblocks[0][0][0] = scalar(-1.0);
  v = validate_spec(spec);
  ASSERT_FALSE(v.ok());
  EXPECT_THROW(require_valid(spec), SpecError);
}

TEST(GameModel, AssembleFixture) {
  const auto am = assemble(fixture_a());
  EXPECT_LE((am.boldR - Matrix::Identity(2, 2)).norm(), 0.0);
  Matrix M(2, 2);
  M << 1.0, -0.5, -0.5, 1.0;
  EXPECT_LE((am.boldM - M).norm(), 1e-15);
  EXPECT_LE(am.qvec.norm(), 0.0);
}

TEST(GameModel, BoldQHasZeroDiagonalBlocks) {
  for (std::size_t N : {2u, 3u, 5u}) {
    for (std::size_t d : {1u, 2u}) {
      ExampleParams p;
      p.B = 0.2;
      p.C = 0.1;
      p.D = 0.05;
      for (const auto& spec : {build_example(ExampleKind::symmetric, N, d, p),
                               build_example(ExampleKind::consensus, N, d, ExampleParams{})}) {
        const auto am = assemble(spec);
        const auto dd = static_cast<Eigen::Index>(d);
        for (std::size_t i = 0; i < N; ++i)
          EXPECT_EQ(am.boldQ.block(i * dd, i * dd, dd, dd).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(am.boldQ.trace(), 0.0);
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t j = 0; j < N; ++j)
            for (std::size_t k = 0; k < N; ++k)
              EXPECT_LE((spec.cost.Q(i, j, k).transpose() - spec.cost.Q(i, k, j)).norm(), 0.0);
      }
    }
  }
}

TEST(GameModel, ConsensusStructure) {
  // N=2 consensus is FIX-A
  const auto c2 = build_example(ExampleKind::consensus, 2, 1, ExampleParams{});
  EXPECT_EQ(spec_to_json(c2), spec_to_json(fixture_a()));
  for (std::size_t N = 2; N <= 32; N *= 2) {
    const auto spec = build_example(ExampleKind::consensus, N, 1, ExampleParams{});
    const auto am = assemble(spec);
    for (std::size_t i = 0; i < N; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < N; ++j)
        if (j != i) row += spec.cost.Q(i, i, j)(0, 0);
      EXPECT_NEAR(row, -0.5, 1e-14);
    }
    EXPECT_GT(min_singular_value(am.boldM), 0.0) << "N=" << N;
  }
}

TEST(GameModel, SymmetricBlocks) {
  ExampleParams p;
  p.B = 1.0 / 30.0;
  const auto spec = build_example(ExampleKind::symmetric, 3, 2, p);
  EXPECT_LE((spec.cost.Q(0, 0, 1) - Matrix::Identity(2, 2) / 30.0).norm(), 1e-16);
  EXPECT_LE((spec.cost.Q(0, 0, 2) - Matrix::Identity(2, 2) / 30.0).norm(), 1e-16);
}

TEST(GameModel, F1F0HandValues) {
  auto spec = fixture_a();
  const std::vector<Vector> zero{Vector::Zero(1), Vector::Zero(1)};
  EXPECT_NEAR(eval_F1(spec, 0, zero)(0), 0.0, 0.0);
  const std::vector<Vector> two{Vector::Zero(1), Vector::Constant(1, 2.0)};
  EXPECT_NEAR(eval_F1(spec, 0, two)(0), -1.0, 1e-15);
  const std::vector<Matrix> halves{scalar(0.5), scalar(0.5)};
  EXPECT_NEAR(eval_F0(spec, 0, zero, halves), 0.25, 1e-15);
  const std::vector<Vector> one{Vector::Zero(1), Vector::Ones(1)};
  EXPECT_NEAR(eval_F0(spec, 0, one, halves), 0.75, 1e-15);
  spec.cost.xbar[0][0] = Vector::Ones(1);
  EXPECT_NEAR(eval_F1(spec, 0, zero)(0), -0.5, 1e-15);
}

TEST(GameModel, F0F1MatchGaussianExpectation) {
  // E over X_j ~ N(y_j, V_j), j != i, of (X - xbar)' Q (X - xbar) with X_i = x
  // equals x' Q_ii x + 2 F1' x + F0 (closed-form Gaussian moments).
  std::mt19937_64 rng(21);
  const std::size_t N = 3;
  const Eigen::Index d = 2;
  ExampleParams p;
  p.B = 0.3;
  p.C = 0.2;
  p.D = 0.1;
  auto spec = build_example(ExampleKind::symmetric, N, 2, p);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) spec.cost.xbar[i][j] = random_matrix(rng, d, 1);
  std::vector<Vector> y;
  std::vector<Matrix> V;
  for (std::size_t j = 0; j < N; ++j) {
    y.push_back(random_matrix(rng, d, 1));
    V.push_back(random_spd(rng, d));
  }
  for (std::size_t i = 0; i < N; ++i) {
    const Vector x = random_matrix(rng, d, 1);
    const Matrix Q = spec.cost.full_Q(i);
    const Vector xb = spec.cost.full_xbar(i);
    Vector m(N * d);
    Matrix C = Matrix::Zero(N * d, N * d);
    for (std::size_t j = 0; j < N; ++j) {
      m.segment(j * d, d) = j == i ? x : y[j];
      if (j != i) C.block(j * d, j * d, d, d) = V[j];
    }
    const double expect = (m - xb).dot(Q * (m - xb)) + (Q * C).trace();
    const double model = x.dot(spec.cost.Q(i, i, i) * x) + 2.0 * eval_F1(spec, i, y).dot(x) +
                         eval_F0(spec, i, y, f0_covariances(F0Mode::per_player, i, V));
    EXPECT_NEAR(model, expect, 1e-12 * std::max(1.0, std::abs(expect)));
  }
}

TEST(GameModel, F0ModesAgreeOnSymmetricCovariances) {
  const auto spec = symmetric_fixture(3);
  const std::vector<Vector> y(3, Vector::Constant(1, 0.3));
  const std::vector<Matrix> same(3, scalar(0.4));
  EXPECT_DOUBLE_EQ(eval_F0(spec, 0, y, f0_covariances(F0Mode::per_player, 0, same)),
                   eval_F0(spec, 0, y, f0_covariances(F0Mode::paper_literal, 0, same)));
}

TEST(GameModel, JsonRoundTrip) {
  ExampleParams p;
  p.B = 0.2;
  p.xbar = 0.7;
  p.mu0 = -0.3;
  const auto spec = build_example(ExampleKind::symmetric, 3, 2, p);
  const auto j = spec_to_json(spec);
  const auto back = spec_from_json(j);
  EXPECT_EQ(spec_to_json(back), j);
  EXPECT_THROW(spec_from_json(nlohmann::json::parse(R"({"N": 2})")), SpecError);
  EXPECT_THROW(parse_example_params({{"bogus", 1.0}}), SpecError);
}

// ---------------------------------------------------------------------------
// riccati_ergodic

TEST(RiccatiErgodic, AreExamples) {
  EXPECT_NEAR(solve_are(scalar(-1.0), scalar(1.0), scalar(0.5))(0, 0), kSqrt2 - 1.0, 1e-10);
  EXPECT_NEAR(solve_are(scalar(0.0), scalar(1.0), scalar(0.5))(0, 0), 1.0, 1e-10);
  Matrix A = Matrix::Zero(2, 2);
  A.diagonal() << -1.0, -2.0;
  const Matrix L = solve_are(A, Matrix::Identity(2, 2), 0.5 * Matrix::Identity(2, 2));
  Matrix expect = Matrix::Zero(2, 2);
  expect.diagonal() << kSqrt2 - 1.0, std::sqrt(5.0) - 2.0;
  EXPECT_LE((L - expect).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(RiccatiErgodic, SignAndKleinmanRoutesAgree) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + trial % 4;
    const Matrix A = random_matrix(rng, d, d, 0.7);
    const Matrix R = random_spd(rng, d);
    const Matrix Q = random_spd(rng, d);
    const Matrix L1 = solve_are(A, R, Q);
    const Matrix L2 = solve_are_kleinman(A, R, Q);
    EXPECT_LE((L1 - L2).norm(), 1e-8 * L1.norm()) << "trial " << trial;
    EXPECT_LE(are_residual(L1, A, R, Q), 1e-10);
    EXPECT_TRUE(is_spd(L1));
    EXPECT_TRUE(is_hurwitz(A - spd_inverse(R) * L1));
  }
}

TEST(RiccatiErgodic, SigmaRoutes) {
  const auto spec = fixture_a();
  const auto& p = spec.players[0];
  const Matrix L = solve_are(p.A, p.R, spec.cost.Q(0, 0, 0));
  const auto sp = solve_sigma_ergodic(p, L, spec.cost.Q(0, 0, 0));
  EXPECT_NEAR(sp.Sigma(0, 0), 2.0 * kSqrt2, 1e-12);
  EXPECT_NEAR(sp.Sigma_alt(0, 0), 2.0 * kSqrt2, 1e-10);
  EXPECT_EQ(sylvester_residual(p, sp.Sigma), 0.0);

  auto q = make_player(scalar(0.0), scalar(1.0), scalar(1.0), Vector::Zero(1), scalar(1.0));
  const Matrix L0 = solve_are(q.A, q.R, scalar(0.5));
  const auto s0 = solve_sigma_ergodic(q, L0, scalar(0.5));
  EXPECT_NEAR(s0.Sigma(0, 0), 2.0, 1e-10);
  EXPECT_NEAR(1.0 / s0.Sigma(0, 0), 0.5, 1e-10);
}

TEST(RiccatiErgodic, MuHandSolveAndSingular) {
  AssembledMatrices am;
  am.boldM = Matrix(2, 2);
  am.boldM << 1.0, -0.5, -0.5, 1.0;
  am.qvec = Vector::Ones(2);
  const Vector mu = solve_mu(am);
  EXPECT_NEAR(mu(0), 2.0, 1e-14);
  EXPECT_NEAR(mu(1), 2.0, 1e-14);
  am.boldM << 1.0, 1.0, 1.0, 1.0;
  EXPECT_THROW(solve_mu(am), NumericError);
}

TEST(RiccatiErgodic, FixtureSolution) {
  const auto erg = solve_ergodic_system(fixture_a());
  for (const auto& p : erg.players) {
    EXPECT_NEAR(p.Lambda(0, 0), kSqrt2 - 1.0, 1e-12);
    EXPECT_NEAR(p.cov(0, 0), kSqrt2 / 4.0, 1e-12);
    EXPECT_LE(p.mu.norm(), 0.0);
    EXPECT_LE(p.rho.norm(), 0.0);
    EXPECT_NEAR(p.c, (5.0 * kSqrt2 - 4.0) / 8.0, 1e-12);
    EXPECT_LE(p.cert.route_gap, 1e-10);
    EXPECT_LE(p.cert.lyapunov_residual, 1e-12);
  }
  EXPECT_NEAR(erg.M_sigma_min, 0.5, 1e-12);
}

TEST(RiccatiErgodic, SymmetricExchangeableAndDualRoute) {
  const auto erg = solve_ergodic_system(symmetric_fixture(3));
  EXPECT_NEAR(erg.players[0].mu(0), erg.players[1].mu(0), 1e-12);
  EXPECT_NEAR(erg.players[0].mu(0), erg.players[2].mu(0), 1e-12);
  for (std::size_t N : {2u, 4u, 8u}) {
    ExampleParams p;
    p.B = 0.1;
    p.xbar = 1.0;
    p.uniform = true;
    for (const auto& spec : {build_example(ExampleKind::symmetric, N, 2, p),
                             build_example(ExampleKind::consensus, N, 2, ExampleParams{})}) {
      const auto e = solve_ergodic_system(spec);
      for (const auto& pl : e.players) {
        EXPECT_LE((pl.Sigma - pl.Sigma_alt).norm(), 1e-9 * pl.Sigma.norm());
        EXPECT_LE(pl.cert.fourth_residual, 1e-10);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// riccati_finite

TEST(RiccatiFinite, LambdaClosedForm) {
  const auto spec = fixture_a();
  const TimeGrid grid(5.0, 5000);
  const auto L = solve_lambda_backward(spec.players[0], spec.cost.Q(0, 0, 0), grid);
  double worst = 0.0;
  for (std::size_t k = 0; k <= grid.K; ++k) worst = std::max(worst, std::abs(L[k](0, 0) - fixture_lambda(5.0, grid.t(k))));
  EXPECT_LE(worst, 1e-8);
  EXPECT_EQ(L.back()(0, 0), 0.0);
}

TEST(RiccatiFinite, LambdaFourthOrder) {
  const auto spec = fixture_a();
  auto err = [&](std::size_t K) {
    const TimeGrid grid(5.0, K);
    const auto L = solve_lambda_backward(spec.players[0], spec.cost.Q(0, 0, 0), grid);
    double worst = 0.0;
    for (std::size_t k = 0; k <= K; ++k) worst = std::max(worst, std::abs(L[k](0, 0) - fixture_lambda(5.0, grid.t(k))));
    return worst;
  };
  EXPECT_GE(err(100) / err(200), 8.0);
}

TEST(RiccatiFinite, LambdaMonotoneInQ) {
  const auto p = fixture_a().players[0];
  const TimeGrid grid(3.0, 600);
  const auto lo = solve_lambda_backward(p, scalar(0.2), grid);
  const auto hi = solve_lambda_backward(p, scalar(0.6), grid);
  const auto tiny = solve_lambda_backward(p, scalar(1e-8), grid);
  for (std::size_t k = 0; k < grid.K; ++k) {
    EXPECT_GT(hi[k](0, 0), lo[k](0, 0));
    EXPECT_LT(tiny[k](0, 0), 1e-8);
  }
}

TEST(RiccatiFinite, CovarianceRelaxesAndIsSecondOrder) {
  const auto spec = fixture_a();
  const auto p = spec.players[0];
  const TimeGrid grid(5.0, 5000);
  const auto L = solve_lambda_backward(p, spec.cost.Q(0, 0, 0), grid);
  const auto V = solve_sigma_forward(p, L, grid);
  EXPECT_NEAR(V[0](0, 0), 0.5, 0.0);
  EXPECT_NEAR(V[2500](0, 0), kSqrt2 / 4.0, 1e-3);

  // Refinement: compare against a fine-grid reference.
  auto at_mid = [&](std::size_t K) {
    const TimeGrid g(5.0, K);
    const auto Lk = solve_lambda_backward(p, spec.cost.Q(0, 0, 0), g);
    return solve_sigma_forward(p, Lk, g)[K / 2](0, 0);
  };
  const double ref = at_mid(20000);
  const double e1 = std::abs(at_mid(100) - ref), e2 = std::abs(at_mid(200) - ref);
  EXPECT_GE(e1 / e2, 3.5);
}

TEST(RiccatiFinite, FrozenCovariance) {
  auto p = make_player(scalar(0.0), scalar(1.0), scalar(1.0), Vector::Zero(1), scalar(2.0));
  p.varsigma = scalar(0.0);
  const TimeGrid grid(1.0, 100);
  const std::vector<Matrix> L(grid.K + 1, scalar(0.0));
  const auto V = solve_sigma_forward(p, L, grid);
  for (const auto& v : V) EXPECT_EQ(v(0, 0), 0.5);
}

TEST(RiccatiFinite, FixtureSolutionInvariants) {
  const auto spec = fixture_a();
  const TimeGrid grid(5.0, 5000);
  const auto sol = solve_finite_system(spec, grid);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& pp = sol.players[i];
    EXPECT_EQ(pp.Lambda.back()(0, 0), 0.0);
    EXPECT_EQ(pp.kappa.back(), 0.0);
    EXPECT_EQ(pp.rho.back()(0), 0.0);
    EXPECT_EQ(pp.mu.front()(0), 0.0);
    for (std::size_t k = 0; k <= grid.K; ++k) {
      EXPECT_LE(std::abs(pp.mu[k](0)), 1e-12);
      EXPECT_LE(std::abs(pp.rho[k](0)), 1e-12);
    }
    const auto L = solve_lambda_backward(spec.players[i], spec.cost.Q(i, i, i), grid);
    for (std::size_t k = 0; k <= grid.K; ++k) EXPECT_EQ(L[k](0, 0), pp.Lambda[k](0, 0));
  }
  // value and feedback formulas
  const double L0 = sol.players[0].Lambda[0](0, 0);
  EXPECT_NEAR(evaluate_value(sol, 0, 0.0, Vector::Ones(1)), 0.5 * L0 + sol.players[0].kappa[0], 1e-15);
  EXPECT_NEAR(evaluate_feedback(sol, spec, 0, 0.0, Vector::Constant(1, 2.0))(0), 2.0 * L0, 1e-15);
  EXPECT_EQ(evaluate_value(sol, 0, 5.0, Vector::Constant(1, 3.0)), 0.0);
  EXPECT_EQ(evaluate_feedback(sol, spec, 0, 5.0, Vector::Constant(1, 3.0))(0), 0.0);
}

TEST(RiccatiFinite, KappaReducesToTraceIntegral) {
  // With mu = rho = 0 and xbar = 0, F0 is the trace term only.
  const auto spec = fixture_a();
  const TimeGrid grid(4.0, 4000);
  const auto sol = solve_finite_system(spec, grid);
  double integral = 0.0;
  for (std::size_t k = 0; k < grid.K; ++k) {
    auto g = [&](std::size_t j) {
      return 0.5 * sol.players[0].Lambda[j](0, 0) + 0.5 * sol.players[1].SigmaInv[j](0, 0);
    };
    integral += 0.5 * grid.h() * (g(k) + g(k + 1));
  }
  EXPECT_NEAR(sol.players[0].kappa[0], integral, 1e-12);
}

TEST(RiccatiFinite, KappaOverTApproachesC) {
  const auto spec = fixture_a();
  const double c = (5.0 * kSqrt2 - 4.0) / 8.0;
  const auto sol = solve_finite_system(spec, TimeGrid(20.0, 20000));
  EXPECT_LE(std::abs(sol.players[0].kappa[0] / 20.0 - c), 1.0 / 20.0);
}

TEST(RiccatiFinite, DirectAndPicardAgree) {
  auto spec = fixture_a();
  spec.players[0].mu0 = Vector::Ones(1);
  spec.players[1].mu0 = -Vector::Ones(1);
  const TimeGrid grid(5.0, 2000);
  std::vector<std::vector<Matrix>> lambdas;
  for (std::size_t i = 0; i < 2; ++i)
    lambdas.push_back(solve_lambda_backward(spec.players[i], spec.cost.Q(i, i, i), grid));
  const auto sc = stacked_coefficients(spec, lambdas);
  const auto direct = solve_mu_rho_direct(sc, grid);
  const auto pic = solve_mu_rho_picard(sc, grid);
  ASSERT_TRUE(pic.converged);
  double gap = 0.0;
  for (std::size_t k = 0; k <= grid.K; ++k)
    gap = std::max({gap, (direct.mu[k] - pic.paths.mu[k]).cwiseAbs().maxCoeff(),
                    (direct.rho[k] - pic.paths.rho[k]).cwiseAbs().maxCoeff()});
  EXPECT_LE(gap, 1e-8);
  EXPECT_LT(std::abs(direct.mu[grid.K](0)), 0.5);
}

TEST(RiccatiFinite, SymmetricPlayersStayEqual) {
  const auto sol = solve_finite_system(symmetric_fixture(2), TimeGrid(5.0, 1000));
  for (std::size_t k = 0; k <= sol.grid.K; ++k) {
    EXPECT_NEAR(sol.players[0].mu[k](0), sol.players[1].mu[k](0), 1e-12);
    EXPECT_NEAR(sol.players[0].rho[k](0), sol.players[1].rho[k](0), 1e-12);
  }
}

TEST(RiccatiFinite, ConsensusLargerGameIsPositive) {
  const auto spec = build_example(ExampleKind::consensus, 8, 2, ExampleParams{});
  const auto sol = solve_finite_system(spec, TimeGrid(10.0, 2000));
  for (const auto& pp : sol.players)
    for (std::size_t k = 0; k <= sol.grid.K; ++k) {
      EXPECT_TRUE(is_psd(pp.Lambda[k]));
      EXPECT_TRUE(is_spd(pp.SigmaInv[k]));
      EXPECT_TRUE(is_symmetric(pp.SigmaInv[k], 1e-12));
    }
}

TEST(RiccatiFinite, HjbResidual) {
  const auto spec = fixture_a();
  const auto sol = solve_finite_system(spec, TimeGrid(5.0, 5000));
  for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    EXPECT_LE(std::abs(hjb_residual(sol, spec, 0, 2.5, Vector::Constant(1, x))), 1e-6);
    EXPECT_LE(std::abs(hjb_residual(sol, spec, 0, 0.0, Vector::Constant(1, x))), 1e-4);
    EXPECT_LE(std::abs(hjb_residual(sol, spec, 0, 5.0, Vector::Constant(1, x))), 1e-4);
  }
  auto bent = sol;
  for (auto& L : bent.players[0].Lambda) L(0, 0) += 0.1;
  const double r = hjb_residual(bent, spec, 0, 2.5, Vector::Constant(1, 2.0));
  EXPECT_GT(std::abs(r), 0.05);
  EXPECT_THROW(hjb_residual(sol, spec, 0, 2.50013, Vector::Zero(1)), SpecError);
}

TEST(RiccatiFinite, GridValidation) {
  EXPECT_THROW(TimeGrid(0.0, 100), SpecError);
  EXPECT_THROW(TimeGrid(1.0, 15), SpecError);
  const auto g = TimeGrid::with_default_steps(5.0);
  EXPECT_LE(g.h(), 1e-3 + 1e-15);
}

// ---------------------------------------------------------------------------
// envelope

TEST(Envelope, SyntheticSingleBranch) {
  std::vector<double> t, g;
  for (int k = 0; k <= 400; ++k) {
    t.push_back(10.0 * k / 400.0);
    g.push_back(3.0 * std::exp(-2.0 * t.back()));
  }
  const auto f = fit_envelope(t, g, 10.0, Branch::left);
  ASSERT_TRUE(f.ok());
  EXPECT_NEAR(f.Khat, 3.0, 1e-6);
  EXPECT_NEAR(f.lambdahat, 2.0, 1e-6);
  EXPECT_GE(f.window_lo, 0.05 * 10.0 - 1e-12);
  EXPECT_LE(f.window_hi, 0.95 * 10.0 + 1e-12);
}

TEST(Envelope, SyntheticTwoSided) {
  std::vector<double> t, g;
  for (int k = 0; k <= 400; ++k) {
    t.push_back(20.0 * k / 400.0);
    g.push_back(std::exp(-t.back()) + std::exp(-(20.0 - t.back())));
  }
  bool any = false;
  EXPECT_EQ(detect_branch(t, g, 20.0, any), Branch::two_sided);
  EXPECT_TRUE(any);
  const auto f = fit_envelope(t, g, 20.0, Branch::two_sided);
  ASSERT_TRUE(f.ok());
  EXPECT_NEAR(f.Khat, 1.0, 1e-3);
  EXPECT_NEAR(f.lambdahat, 1.0, 1e-3);
}

TEST(Envelope, ZeroDegenerateAndGrowing) {
  std::vector<double> t, zero, grow;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(k / 10.0);
    zero.push_back(0.0);
    grow.push_back(std::exp(0.5 * t.back()));
  }
  EXPECT_EQ(fit_envelope(t, zero, 10.0, Branch::left).status, FitStatus::exact_zero);
  EXPECT_EQ(fit_envelope(t, grow, 10.0, Branch::left).status, FitStatus::fit_fail);
  const std::vector<double> few_t{0.0, 5.0, 10.0}, few_g{1.0, 0.5, 0.25};
  EXPECT_EQ(fit_envelope(few_t, few_g, 10.0, Branch::left).status, FitStatus::degenerate);
}

TEST(Envelope, Spearman) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_EQ(spearman({1, 2, 3}, {5, 5, 5}), 0.0);
  const auto r = ranks({3.0, 1.0, 3.0});
  EXPECT_EQ(r[1], 1.0);
  EXPECT_EQ(r[0], 2.5);
}

// ---------------------------------------------------------------------------
// assumptions

TEST(Assumptions, FixturePassesGatingRecords) {
  const auto spec = fixture_a();
  const auto erg = solve_ergodic_system(spec);
  const auto fin = solve_finite_system(spec, TimeGrid(10.0, 5000));
  LambdaPathData lp;
  lp.T = 10.0;
  for (std::size_t k = 0; k <= fin.grid.K; ++k) lp.t.push_back(fin.grid.t(k));
  for (const auto& p : fin.players) lp.Lambda.push_back(p.Lambda);
  const auto rep = check_assumptions(spec, &erg, &lp);
  ASSERT_NE(rep.find("structural_spd"), nullptr);
  EXPECT_EQ(rep.find("structural_spd")->status, CheckStatus::pass);
  EXPECT_EQ(rep.find("sylvester_commutation")->status, CheckStatus::pass);
  EXPECT_EQ(rep.find("riccati_bracket")->status, CheckStatus::pass);
  EXPECT_TRUE(rep.passed(false));
  const auto j = report_to_json(rep);
  EXPECT_TRUE(j.contains("records"));
}

TEST(Assumptions, NegativeQFails) {
  auto spec = fixture_a();
  spec.cost.Qblocks[0][0][0] = scalar(-1.0);
  const auto rep = check_assumptions(spec);
  EXPECT_EQ(rep.find("structural_spd")->status, CheckStatus::fail);
  EXPECT_FALSE(rep.passed(false));
}

TEST(Assumptions, SemigroupConstant) {
  // Normal matrix: ||exp(Ft)|| = exp(-lambda t) exactly, so K = 1.
  EXPECT_NEAR(measure_semigroup_constant(scalar(-kSqrt2), kSqrt2), 1.0, 1e-12);
  Matrix J(2, 2);
  J << -1.0, 5.0, 0.0, -1.0;
  EXPECT_GT(measure_semigroup_constant(J, 1.0), 1.0);
}
