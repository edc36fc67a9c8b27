#pragma once

#include "ridgeem/em.hpp"

#include <Eigen/Dense>

namespace ridgeem::detail {

struct Moments {
  Eigen::MatrixXd XtX;
  Eigen::VectorXd Xty;
  double yty = 0.0;
  Index n = 0;
};

Moments moments(const Dataset& data);

struct PriorTerms {
  Eigen::MatrixXd precision;
  double logdet_precision = 0.0;
};

PriorTerms prior_terms(const CovarianceFamily& family, const GridGeometry* geom, Index d);

// Unscaled CAR structure D - alpha A through the spectrum of
// D^{-1/2} A D^{-1/2}: logdet(D - alpha A) = logdet D + sum ln(1 - alpha lambda).
class CarSpectrum {
 public:
  explicit CarSpectrum(const GridGeometry& geom);
  double log_det(double alpha) const;
  // d/dalpha logdet(D - alpha A) = -Tr((D - alpha A)^{-1} A)
  double log_det_derivative(double alpha) const;

 private:
  Eigen::VectorXd lambda_;
  double log_det_degree_ = 0.0;
};

// Factor C with M = C C^T (Cholesky, or a clipped eigen square root when M is
// only semidefinite).
Eigen::MatrixXd moment_factor(const Eigen::MatrixXd& second_moment);

FamilyUpdate fit_matern_factor(const Eigen::MatrixXd& factor, const GridGeometry& geom,
                               const Matern& current, const MStepOptions& opts);
FamilyUpdate fit_wcar_trace(double trace_degree, double trace_adjacency, const CarSpectrum& spectrum,
                            Index d, const Wcar& current, const MStepOptions& opts);

}  // namespace ridgeem::detail
