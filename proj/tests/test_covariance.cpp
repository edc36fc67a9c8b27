#include "ridgeem/covariance.hpp"
#include "ridgeem/errors.hpp"
#include "ridgeem/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace ridgeem;

namespace {

// K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, composite Simpson.
double bessel_k(double nu, double x) {
  const double t_max = std::acosh(1.0 + 60.0 / x) + 1.0;
  const int m = 20000;
  const double h = t_max / m;
  double s = 0.0;
  for (int i = 0; i <= m; ++i) {
    const double t = i * h;
    const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * std::exp(-x * std::cosh(t)) * std::cosh(nu * t);
  }
  return s * h / 3.0;
}

double matern_bessel(double h, double variance, double range, double nu) {
  const double u = h / range;
  return variance * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(u, nu) * bessel_k(nu, u);
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

GridGeometry line2() { return build_grid_geometry(1, 2); }

}  // namespace

TEST(Geometry, FifteenGrid) {
  const auto g = build_grid_geometry(15, 15);
  EXPECT_EQ(g.size(), 225);
  EXPECT_EQ(g.neighbor_counts(0), 2);
  EXPECT_EQ(g.neighbor_counts(16), 4);
  EXPECT_EQ(g.coords(0, 0), 1);
  EXPECT_EQ(g.coords(0, 1), 1);
  EXPECT_EQ(g.coords(1, 1), 2);
  EXPECT_EQ(g.coords(15, 0), 2);
  EXPECT_NEAR(g.diameter(), 14 * std::sqrt(2.0), 1e-12);
  EXPECT_NO_THROW(check_geometry(g));
}

TEST(Geometry, TwoSiteLine) {
  const auto g = line2();
  Eigen::Matrix2d expected;
  expected << 0, 1, 1, 0;
  EXPECT_EQ(g.dist, expected);
  EXPECT_EQ(g.adjacency, expected);
  EXPECT_EQ(g.neighbor_counts, Eigen::Vector2d(1, 1));
}

TEST(Geometry, TwoByTwo) {
  const auto g = build_grid_geometry(2, 2);
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(g.neighbor_counts(i), 2);
  EXPECT_DOUBLE_EQ(g.dist(0, 3), std::sqrt(2.0));
  EXPECT_EQ(g.adjacency(0, 3), 0);
}

TEST(Geometry, RejectsSingleSite) {
  EXPECT_THROW(build_grid_geometry(1, 1), std::invalid_argument);
  EXPECT_THROW(build_grid_geometry(0, 5), std::invalid_argument);
}

TEST(Geometry, FromSites) {
  Eigen::MatrixX2d c(3, 2);
  c << 0, 0, 3, 4, 6, 8;
  const std::vector<std::pair<Index, Index>> edges{{0, 1}, {1, 2}, {2, 1}};
  const auto g = geometry_from_sites(c, edges);
  EXPECT_DOUBLE_EQ(g.dist(0, 1), 5.0);
  EXPECT_EQ(g.neighbor_counts, Eigen::Vector3d(1, 2, 1));
  const std::vector<std::pair<Index, Index>> loop{{1, 1}};
  EXPECT_THROW(geometry_from_sites(c, loop), std::invalid_argument);
  const std::vector<std::pair<Index, Index>> out_of_range{{0, 3}};
  EXPECT_THROW(geometry_from_sites(c, out_of_range), std::invalid_argument);
}

TEST(Geometry, IsolatedSitesRejectedForCar) {
  Eigen::MatrixX2d c(3, 2);
  c << 0, 0, 1, 0, 5, 5;
  const std::vector<std::pair<Index, Index>> edges{{0, 1}};
  const auto g = geometry_from_sites(c, edges);
  EXPECT_TRUE(g.has_isolated_sites());
  EXPECT_THROW(precision_matrix(Wcar{1, 0.5}, g), std::invalid_argument);
  EXPECT_NO_THROW(covariance_matrix(Matern{1, 1}, g));
}

TEST(Family, ParseAndValidate) {
  EXPECT_EQ(parse_family_kind("matern"), FamilyKind::matern);
  EXPECT_EQ(parse_family_kind("car"), FamilyKind::wcar);
  EXPECT_THROW(parse_family_kind("gauss"), std::invalid_argument);
  EXPECT_THROW(validate(Wcar{1, 1.0}), std::invalid_argument);
  EXPECT_THROW(validate(Wcar{0, 0.1}), std::invalid_argument);
  EXPECT_THROW(validate(Matern{1, 0}), std::invalid_argument);
  EXPECT_THROW(validate(Diagonal{-1}), std::invalid_argument);
  EXPECT_NO_THROW(validate(Wcar{1, -0.99}));
}

TEST(MaternKernel, ZeroDistanceIsVariance) { EXPECT_EQ(matern_kernel(0, 2.5, 3), 2.5); }

TEST(MaternKernel, MatchesBesselOracle) {
  EXPECT_NEAR(matern_kernel(1.0, 1.0, 1.0), 2.0 / std::numbers::e, 1e-15);
  for (double h : {0.3, 1.0, 2.0, 7.5})
    for (double phi : {0.5, 1.0, 4.0})
      EXPECT_NEAR(matern_kernel(h, 1.3, phi), matern_bessel(h, 1.3, phi, 1.5), 1e-9) << h << " " << phi;
  EXPECT_NEAR(matern_bessel(1.0, 1.0, 1.0, 1.5), 0.73576, 1e-5);
}

TEST(MaternKernel, DecayAndMonotonicity) {
  EXPECT_LT(matern_kernel(100.0, 1.0, 1.0), 1e-40);
  for (double phi = 0.5; phi < 8; phi += 0.5)
    for (double h = 0.1; h < 20; h += 0.3) {
      EXPECT_LE(matern_kernel(h + 1e-3, 1, phi), matern_kernel(h, 1, phi));
      EXPECT_GT(matern_kernel(h, 1, phi + 1e-3), matern_kernel(h, 1, phi));
    }
  EXPECT_THROW(matern_kernel(1, 0, 1), std::invalid_argument);
  EXPECT_THROW(matern_kernel(1, 1, -1), std::invalid_argument);
}

TEST(CovarianceMatrix, Diagonal) {
  const auto g = build_grid_geometry(2, 2);
  EXPECT_EQ(covariance_matrix(Diagonal{7}, g), 7.0 * Eigen::MatrixXd::Identity(4, 4));
  EXPECT_EQ(precision_matrix(Diagonal{2}, build_grid_geometry(1, 3)), 0.5 * Eigen::MatrixXd::Identity(3, 3));
}

TEST(CovarianceMatrix, MaternDiagonalIsVariance) {
  const auto g = build_grid_geometry(3, 3);
  const auto K = covariance_matrix(Matern{1.7, 2.0}, g);
  for (Index i = 0; i < 9; ++i) EXPECT_EQ(K(i, i), 1.7);
  EXPECT_EQ(K, K.transpose());
  EXPECT_NEAR(K(0, 1), matern_kernel(1.0, 1.7, 2.0), 1e-15);
}

TEST(CovarianceMatrix, MaternDuplicateSitesIsModelError) {
  Eigen::MatrixX2d c(2, 2);
  c << 1, 1, 1, 1;
  GridGeometry g;
  g.coords = c;
  g.dist = Eigen::MatrixXd::Zero(2, 2);
  g.adjacency = Eigen::MatrixXd::Zero(2, 2);
  g.neighbor_counts = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(covariance_matrix(Matern{1, 1}, g), ModelError);
}

TEST(CovarianceMatrix, WcarAlphaZero) {
  const auto g = build_grid_geometry(3, 4);
  const auto S = covariance_matrix(Wcar{1, 0}, g);
  EXPECT_LT(max_abs(S - Eigen::MatrixXd(g.neighbor_counts.cwiseInverse().asDiagonal())), 1e-14);
  EXPECT_LT(max_abs(precision_matrix(Wcar{2, 0}, g) - Eigen::MatrixXd(0.5 * g.neighbor_counts.asDiagonal())),
            1e-15);
}

TEST(PrecisionMatrix, TwoSiteWcar) {
  Eigen::Matrix2d expected;
  expected << 1, -0.5, -0.5, 1;
  EXPECT_LT(max_abs(precision_matrix(Wcar{1, 0.5}, line2()) - expected), 1e-15);
  EXPECT_NEAR(log_det_precision(Wcar{1, 0.5}, line2()), std::log(0.75), 1e-14);
  EXPECT_NEAR(std::log(0.75), -0.28768, 1e-5);
}

TEST(PrecisionMatrix, RejectsUnitAlpha) {
  EXPECT_THROW(precision_matrix(Wcar{1, 1.0}, line2()), std::invalid_argument);
}

TEST(LogDet, DiagonalCases) {
  const auto g = build_grid_geometry(2, 5);
  EXPECT_NEAR(log_det_precision(Diagonal{1}, g), 0.0, 1e-15);
  EXPECT_NEAR(log_det_precision(Diagonal{std::numbers::e}, build_grid_geometry(1, 3)), -3.0, 1e-14);
}

TEST(LogDet, WcarDecomposition) {
  const auto g = build_grid_geometry(5, 6);
  const double base = log_det_precision(Wcar{1, 0.7}, g);
  const double dense = std::log(car_structure(g, 0.7).determinant());
  EXPECT_NEAR(base, dense, 1e-9);
  double prev = base;
  for (double tau2 : {1.5, 2.0, 4.0}) {
    const double v = log_det_precision(Wcar{tau2, 0.7}, g);
    EXPECT_NEAR(v, 30 * std::log(1 / tau2) + base, 1e-9);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(LogDet, MaternMatchesDense) {
  const auto g = build_grid_geometry(4, 4);
  const Eigen::MatrixXd K = covariance_matrix(Matern{0.5, 1.5}, g);
  EXPECT_NEAR(log_det_precision(Matern{0.5, 1.5}, g), -std::log(K.determinant()), 1e-6);
}

TEST(Properties, DiagonalAndWcarCovarianceTimesPrecision) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (auto [r, c] : {std::pair{1, 2}, {3, 3}, {5, 7}, {7, 7}}) {
    const auto g = build_grid_geometry(r, c);
    const Index d = g.size();
    for (int k = 0; k < 10; ++k) {
      const std::vector<CovarianceFamily> fams{Diagonal{5 * u(rng)},
                                               Wcar{2 * u(rng), 1.9 * u(rng) - 0.95}};
      for (const auto& f : fams) {
        const Eigen::MatrixXd prod = precision_matrix(f, g) * covariance_matrix(f, g);
        EXPECT_LT(max_abs(prod - Eigen::MatrixXd::Identity(d, d)), 1e-8)
            << to_string(kind_of(f)) << " d=" << d;
      }
    }
  }
}

TEST(Properties, MaternCovarianceTimesPrecisionIsIdentity) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (auto [r, c] : {std::pair{1, 2}, {3, 3}, {5, 5}, {7, 7}}) {
    const auto g = build_grid_geometry(r, c);
    const Index d = g.size();
    for (int k = 0; k < 10; ++k) {
      const Matern f{5 * u(rng), 3 * u(rng)};
      const Eigen::MatrixXd prod = precision_matrix(f, g) * covariance_matrix(f, g);
      EXPECT_LT(max_abs(prod - Eigen::MatrixXd::Identity(d, d)), 1e-8) << d << " " << f.range;
    }
  }
}

TEST(Properties, FusedRidgeIdentity) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  for (auto [r, c] : {std::pair{1, 2}, {3, 4}, {7, 7}}) {
    const auto g = build_grid_geometry(r, c);
    const Index d = g.size();
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd b(d);
      for (Index i = 0; i < d; ++i) b(i) = z(rng);
      const double quad = b.dot(car_structure(g, 1.0) * b);
      double pairs = 0;
      for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
          if (g.adjacency(i, j) == 1.0) pairs += (b(i) - b(j)) * (b(i) - b(j));
      EXPECT_NEAR(quad, 0.5 * pairs, 1e-10 * (1 + pairs));
    }
  }
}

TEST(Sampling, Deterministic) {
  const auto g = build_grid_geometry(5, 5);
  for (const CovarianceFamily& f : {CovarianceFamily{Diagonal{7}}, CovarianceFamily{Matern{0.1, 4}},
                                    CovarianceFamily{Wcar{1, 0.9}}}) {
    EXPECT_EQ(sample_coefficients(f, g, 42), sample_coefficients(f, g, 42));
    EXPECT_NE(sample_coefficients(f, g, 42), sample_coefficients(f, g, 43));
  }
}

TEST(Sampling, DiagonalVarianceMonteCarlo) {
  const auto g = build_grid_geometry(15, 15);
  double mean_var = 0;
  int in_band = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Eigen::VectorXd b = sample_coefficients(Diagonal{7}, g, s);
    const double v = (b.array() - b.mean()).square().sum() / (b.size() - 1);
    mean_var += v / 100;
    in_band += (v >= 5 && v <= 9);
  }
  EXPECT_NEAR(mean_var, 7.0, 0.35);
  EXPECT_GE(in_band, 95);
}

TEST(Sampling, MaternEmpiricalCovariance) {
  const auto g = build_grid_geometry(3, 3);
  const Matern f{2.0, 1.5};
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(9, 9);
  const int reps = 20000;
  for (int s = 0; s < reps; ++s) {
    const Eigen::VectorXd b = sample_coefficients(f, g, s);
    S += b * b.transpose() / reps;
  }
  EXPECT_LT(max_abs(S - covariance_matrix(f, g)), 0.12);
}

TEST(Sampling, WcarNeighbourCorrelation) {
  const auto g = build_grid_geometry(15, 15);
  double lag1 = 0, lag5 = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Eigen::VectorXd b = sample_coefficients(Wcar{1, 0.9}, g, s);
    const Eigen::VectorXd c = b.array() - b.mean();
    double n1 = 0, n5 = 0, s1 = 0, s5 = 0;
    for (int r = 0; r < 15; ++r)
      for (int k = 0; k < 15; ++k) {
        const int i = r * 15 + k;
        if (k + 1 < 15) s1 += c(i) * c(i + 1), ++n1;
        if (k + 5 < 15) s5 += c(i) * c(i + 5), ++n5;
      }
    const double v = c.squaredNorm() / 225;
    lag1 += s1 / n1 / v / 100;
    lag5 += s5 / n5 / v / 100;
  }
  EXPECT_GT(lag1, lag5);
  EXPECT_GT(lag1, 0.2);
}

TEST(Sampling, WcarEmpiricalCovariance) {
  const auto g = build_grid_geometry(2, 3);
  const Wcar f{1.5, 0.6};
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(6, 6);
  const int reps = 20000;
  for (int s = 0; s < reps; ++s) {
    const Eigen::VectorXd b = sample_coefficients(f, g, s);
    S += b * b.transpose() / reps;
  }
  EXPECT_LT(max_abs(S - covariance_matrix(f, g)), 0.06);
}
