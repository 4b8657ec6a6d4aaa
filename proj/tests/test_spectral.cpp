#include "ringform/spectral.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ringform;

namespace {

const double kBetas[] = {0.0025, 0.05, 0.3};

}  // namespace

TEST(Matrices, BlockLayoutOfA) {
  const EstimationParams p(0.5, 0.01);
  const Matrix a = build_A(3, p).dense;
  ASSERT_EQ(a.rows(), 6);
  EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(a(0, 3), 0.01);
  EXPECT_DOUBLE_EQ(a(3, 0), -0.5);
  EXPECT_DOUBLE_EQ(a(3, 1), 0.25);
  EXPECT_DOUBLE_EQ(a(3, 4), 0.5);
  EXPECT_DOUBLE_EQ(a(3, 3), 0.0);
  EXPECT_DOUBLE_EQ(build_A(3, p).input(5, 0), 0.5);
}

TEST(Matrices, FormationCorrectionAndInput) {
  const EstimationParams p(0.4, 0.1);
  const auto af = build_Af(4, p);
  const Matrix diff = af.dense - build_A(4, p).dense;
  EXPECT_DOUBLE_EQ(diff(7, 2), 0.2);
  EXPECT_DOUBLE_EQ(diff(7, 6), 0.5);
  EXPECT_DOUBLE_EQ(diff.cwiseAbs().sum(), 0.7);
  EXPECT_DOUBLE_EQ(af.input(4, 0), 0.2);
  EXPECT_DOUBLE_EQ(af.input(4, 1), 0.5);
  EXPECT_DOUBLE_EQ(af.input(7, 2), -0.4);
  // Last robot is a vertex: alpha*(q_{n-1} - q_n) + v_{n-1}.
  EXPECT_DOUBLE_EQ(af.dense(7, 2), 0.4);
  EXPECT_DOUBLE_EQ(af.dense(7, 3), -0.4);
  EXPECT_DOUBLE_EQ(af.dense(7, 6), 1.0);
}

TEST(Matrices, CascadeIsBlockLowerTriangular) {
  const EstimationParams p(0.5, 0.05);
  const auto as = build_As(3, 3, p);
  ASSERT_EQ(as.dense.rows(), 18);
  EXPECT_EQ(as.dense.topRightCorner(6, 12).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(as.dense(6 + 3, 2), 0.25);
  EXPECT_DOUBLE_EQ(as.dense(6 + 3, 5), 0.5);
}

TEST(Eigenvalues, MatchPerModeFactorisationOfA) {
  for (std::size_t np : {1u, 2u, 5u, 12u, 30u}) {
    for (double adt : {1e-4, 0.004, 0.05, 0.4}) {
      const Matrix a = build_A(np, EstimationParams(adt / 0.01, 0.01)).dense;
      EXPECT_LT(oracle::multiset_distance(eigenvalues(a), oracle::eig_A(np, adt)), 1e-9)
          << "n'=" << np << " adt=" << adt;
    }
  }
}

TEST(Eigenvalues, MatchPerModeFactorisationOfAr) {
  for (std::size_t np : {1u, 3u, 8u, 20u}) {
    for (double adt : {1e-4, 0.002, 0.03}) {
      const Matrix a = build_Ar(np, EstimationParams(adt / 0.01, 0.01)).dense;
      EXPECT_LT(oracle::multiset_distance(eigenvalues(a), oracle::eig_Ar(np, adt)), 1e-8)
          << "n'=" << np << " adt=" << adt;
    }
  }
}

TEST(Eigenvalues, SpectrumDependsOnlyOnAlphaDt) {
  const double r1 = spectral_radius(build_A(9, EstimationParams(0.5, 0.02)).dense);
  const double r2 = spectral_radius(build_A(9, EstimationParams(2.0, 0.005)).dense);
  EXPECT_NEAR(r1, r2, 1e-12);
}

TEST(Eigenvalues, RejectsBadInput) {
  EXPECT_THROW(eigenvalues(Matrix::Zero(2, 3)), InvalidArgument);
  Matrix m = Matrix::Identity(2, 2);
  m(0, 1) = std::nan("");
  EXPECT_THROW(eigenvalues(m), InvalidArgument);
}

TEST(Eigenvalues, CascadeRepeatsChainSpectrum) {
  const EstimationParams p(0.5, 0.05);
  for (std::size_t n = 2; n <= 10; ++n) {
    const auto af = eigenvalues(build_Af(n, p).dense);
    for (std::size_t m = 1; m <= 4; ++m) {
      std::vector<std::complex<double>> rep;
      for (std::size_t i = 0; i < m; ++i) rep.insert(rep.end(), af.begin(), af.end());
      EXPECT_LT(oracle::multiset_distance(eigenvalues(build_As(n, m, p).dense), rep), 1e-8) << n << "x" << m;
    }
  }
}

// Characteristic polynomial check independent of the block split:
// det(zI - A_s) = det(zI - A_f)^m at a few complex probe points.
TEST(Eigenvalues, CascadeCharacteristicPolynomial) {
  const EstimationParams p(0.5, 0.05);
  const Matrix af = build_Af(5, p).dense;
  const Matrix as = build_As(5, 3, p).dense;
  for (std::complex<double> z : {std::complex<double>(0.3, 0.2), std::complex<double>(-0.7, 0.5),
                                 std::complex<double>(1.2, -0.1)}) {
    const Eigen::MatrixXcd lf = z * Eigen::MatrixXcd::Identity(af.rows(), af.cols()) - af.cast<std::complex<double>>();
    const Eigen::MatrixXcd ls = z * Eigen::MatrixXcd::Identity(as.rows(), as.cols()) - as.cast<std::complex<double>>();
    const auto df = lf.fullPivLu().determinant();
    const auto ds = ls.fullPivLu().determinant();
    EXPECT_LT(std::abs(ds - df * df * df) / std::abs(ds), 1e-10);
  }
}

TEST(StabilityBound, KnownValuesAtNineteen) {
  EXPECT_NEAR(stability_bound(19, Strategy::S1), 0.012088, 1e-6);
  EXPECT_NEAR(stability_bound(19, Strategy::S2), 0.004095, 1e-6);
  EXPECT_TRUE(satisfies_bound(19, EstimationParams(0.5, 0.01), Strategy::S1));
  EXPECT_FALSE(satisfies_bound(19, EstimationParams(0.5, 0.01), Strategy::S2));
}

TEST(StabilityBound, SchurInsideBoundGrid) {
  for (std::size_t np = 1; np <= 30; ++np) {
    for (double frac : {0.05, 0.25, 0.5, 0.75, 0.99}) {
      const double a1 = frac * stability_bound(np, Strategy::S1);
      const double a2 = frac * stability_bound(np, Strategy::S2);
      EXPECT_LT(spectral_radius(build_A(np, EstimationParams(a1 / 0.01, 0.01)).dense), 1.0) << np << " " << frac;
      EXPECT_LT(spectral_radius(build_Ar(np, EstimationParams(a2 / 0.01, 0.01)).dense), 1.0) << np << " " << frac;
    }
  }
}

TEST(ClosedForms, FMatchesRecursionAndInverse) {
  for (double beta : kBetas) {
    for (std::size_t d = 1; d <= 50; ++d) {
      const double want = oracle::inverse_last_diag(oracle::toeplitz3(d, 1.0 + beta, (1.0 - beta) / 2.0));
      EXPECT_LT(oracle::rel_err(f_recursive(d, beta), want), 1e-9) << d << " " << beta;
      EXPECT_LT(oracle::rel_err(f_closed(d, beta), want), 1e-9) << d << " " << beta;
    }
  }
}

TEST(ClosedForms, GMatchesRecursionAndInverse) {
  for (double beta : kBetas) {
    for (std::size_t d = 1; d <= 50; ++d) {
      const double want = oracle::inverse_last_diag(oracle::toeplitz3(d, 1.0 - beta, (1.0 - beta) / 2.0));
      EXPECT_LT(oracle::rel_err(g_closed(d, beta), want), 1e-9) << d << " " << beta;
      EXPECT_LT(oracle::rel_err(g_recursive(d, beta), want), 1e-9) << d << " " << beta;
    }
  }
}

TEST(ClosedForms, DeterminantsMatchLu) {
  for (double beta : kBetas) {
    for (std::size_t d = 1; d <= 50; ++d) {
      for (MVariant v : {MVariant::M, MVariant::Mr}) {
        const double want = oracle::lu_det(build_M(d, beta, v));
        EXPECT_LT(oracle::rel_err(det_M_closed(d, beta, v), want), 1e-9) << d << " " << beta;
        EXPECT_LT(oracle::rel_err(det_M_recursive(d, beta, v), want), 1e-9) << d << " " << beta;
      }
    }
  }
}

TEST(ClosedForms, FixedPointsSolveTheRecursion) {
  for (double beta : kBetas) {
    const auto [r1, r2] = f_fixed_points(beta);
    const double c = (1.0 - beta) * (1.0 - beta) / 4.0;
    EXPECT_NEAR(r1, 1.0 / (1.0 + beta - c * r1), 1e-9 * r1);
    EXPECT_NEAR(r2, 1.0 / (1.0 + beta - c * r2), 1e-9 * r2);
    EXPECT_GT(r1, r2);
  }
}

TEST(ClosedForms, DomainErrors) {
  EXPECT_THROW(f_closed(0, 0.1), InvalidArgument);
  EXPECT_THROW(f_closed(3, 0.0), InvalidArgument);
  EXPECT_THROW(g_closed(3, 1.0), InvalidArgument);
  EXPECT_THROW(EstimationParams(-1.0, 0.1), InvalidArgument);
  EXPECT_THROW(stability_bound(0, Strategy::S1), InvalidArgument);
}

TEST(SteadyRatio, MatchesResolventOfBothEstimators) {
  for (double beta : kBetas) {
    const EstimationParams p(2.0 * beta / 0.01, 0.01);
    for (std::size_t np = 1; np <= 30; ++np) {
      const auto a = build_A(np, p);
      const auto ar = build_Ar(np, p);
      EXPECT_LT(oracle::rel_err(steady_ratio_s1(np, beta), oracle::resolvent_ratio(a.dense, a.input)), 1e-10);
      EXPECT_LT(oracle::rel_err(steady_ratio_s2(np, beta), oracle::resolvent_ratio(ar.dense, ar.input)), 1e-10);
    }
  }
}

TEST(Equilibrium, ChainSitsAtMultiplesOfSpacing) {
  const auto af = build_Af(4, EstimationParams(0.5, 0.05));
  const Vec2 anchor(2.0, -1.0);
  const Vec2 l(0.5, 0.25);
  const auto eq = equilibrium_limit(af, anchor, Vec2::Zero(), l);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR((eq.positions[j] - (anchor - static_cast<double>(j + 1) * l)).norm(), 0.0, 1e-12);
    EXPECT_NEAR(eq.velocities[j].norm(), 0.0, 1e-12);
  }
}

TEST(Equilibrium, RejectsNonSchurChain) {
  const auto af = build_Af(20, EstimationParams(5.0, 0.5));
  ASSERT_GE(spectral_radius(af.dense), 1.0);
  EXPECT_THROW(equilibrium_limit(af, Vec2::Zero(), Vec2::Zero(), Vec2(1, 0)), InvalidArgument);
}

// (I - A_f)^-1 has the explicit block form [[(a dt)^-1 I, -a^-1 A21f^-1], [-dt^-1 I, 0]].
TEST(Equilibrium, ExplicitInverseOfIMinusAf) {
  const EstimationParams p(0.7, 0.03);
  const std::size_t n = 6;
  const auto ni = static_cast<Eigen::Index>(n);
  const Matrix af = build_Af(n, p).dense;
  const Matrix a21f = af.bottomLeftCorner(ni, ni) / p.alpha;
  Matrix inv = Matrix::Zero(2 * ni, 2 * ni);
  inv.topLeftCorner(ni, ni) = Matrix::Identity(ni, ni) / p.alpha_dt();
  inv.topRightCorner(ni, ni) = -a21f.inverse() / p.alpha;
  inv.bottomLeftCorner(ni, ni) = -Matrix::Identity(ni, ni) / p.dt;
  const Matrix prod = (Matrix::Identity(2 * ni, 2 * ni) - af) * inv;
  EXPECT_LT((prod - Matrix::Identity(2 * ni, 2 * ni)).cwiseAbs().maxCoeff(), 1e-10);
}
