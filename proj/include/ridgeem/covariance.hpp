#pragma once

#include "ridgeem/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>
#include <variant>

namespace ridgeem {

// sigma_beta^2 * I
struct Diagonal {
  double variance;
};

// Matern covariance with smoothness fixed at 3/2:
// variance * (1 + h/range) * exp(-h/range).
struct Matern {
  double variance;
  double range;
  static constexpr double smoothness = 1.5;
};

// Weighted CAR prior, precision tau2^{-1} (D - alpha A).
struct Wcar {
  double tau2;
  double alpha;
};

using CovarianceFamily = std::variant<Diagonal, Matern, Wcar>;

enum class FamilyKind { diagonal, matern, wcar };

FamilyKind kind_of(const CovarianceFamily& family);
std::string_view to_string(FamilyKind kind);
// Accepts "diagonal", "matern", "wcar" (and "car" as an alias). Throws
// std::invalid_argument otherwise.
FamilyKind parse_family_kind(std::string_view name);

// Relative diagonal jitter used whenever a Matern covariance is factored.
inline constexpr double kMaternJitter = 1e-10;

// Throws std::invalid_argument when a parameter leaves its domain
// (non-positive variances or range, |alpha| >= 1).
void validate(const CovarianceFamily& family);

double matern_kernel(double h, double variance, double range);

Eigen::MatrixXd covariance_matrix(const CovarianceFamily& family, const GridGeometry& geom);
Eigen::MatrixXd precision_matrix(const CovarianceFamily& family, const GridGeometry& geom);
double log_det_precision(const CovarianceFamily& family, const GridGeometry& geom);

// D - alpha A, the unscaled CAR precision. alpha is not range checked so the
// alpha = 1 intrinsic form can be evaluated.
Eigen::MatrixXd car_structure(const GridGeometry& geom, double alpha);

// Matern correlation (unit variance) plus the factorisation jitter.
Eigen::MatrixXd matern_correlation(const GridGeometry& geom, double range);

// One draw from N(0, Sigma_theta); identical output for identical seeds.
Eigen::VectorXd sample_coefficients(const CovarianceFamily& family, const GridGeometry& geom,
                                    std::uint64_t seed);

}  // namespace ridgeem
