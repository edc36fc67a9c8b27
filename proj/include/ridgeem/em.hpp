#pragma once

#include "ridgeem/covariance.hpp"
#include "ridgeem/geometry.hpp"
#include "ridgeem/optimize.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace ridgeem {

// Response y (length n) and design X (n x d). When centered, x_mean and
// y_mean hold the removed means so new rows can be mapped into model space.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  bool centered = false;
  Eigen::VectorXd x_mean;
  double y_mean = 0.0;

  Index n() const { return X.rows(); }
  Index d() const { return X.cols(); }
};

// Validates shapes and finiteness; optionally mean-centres y and every column of X.
Dataset make_dataset(Eigen::VectorXd y, Eigen::MatrixXd X, bool center);

struct ModelParams {
  double sigma2 = 1.0;
  CovarianceFamily family = Diagonal{1.0};
  // Prior mean of beta; absent means zero.
  std::optional<Eigen::VectorXd> mean;
};

struct PosteriorState {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd second_moment;  // cov + mu mu^T
  double expected_rss = 0.0;      // E ||y - X beta||^2 given y
};

enum class StopReason { tolerance, max_iterations, stalled };
std::string_view to_string(StopReason reason);

// How the prior mean is handled. fixed_constant keeps mean_level * 1 for the
// whole fit; estimated_constant updates the level every iteration.
enum class MeanMode { zero, fixed_constant, estimated_constant };

struct EmConfig {
  double tol = 1e-6;  // relative change of the marginal log-likelihood
  int max_iter = 500;
  bool center = true;  // used by callers that build the Dataset
  double phi_min = 1e-2;
  std::optional<double> phi_max;  // default 10 * grid diameter
  double alpha_eps = 1e-4;
  OptOptions inner{};  // tol 1e-8, 100 iterations, history 6
  bool analytic_wcar_gradient = false;
  bool analytic_matern_gradient = false;
  MeanMode mean_mode = MeanMode::zero;
  double mean_level = 0.0;  // start (or fixed) value of the constant prior mean
  std::uint64_t seed = 0;
  std::optional<ModelParams> start;  // overrides the default initialisation
};

struct FitResult {
  ModelParams params;
  PosteriorState posterior;
  std::vector<double> loglik_trace;  // trace[t] = log p(y | Theta^(t))
  int iterations = 0;
  bool converged = false;
  StopReason stop_reason = StopReason::max_iterations;
  bool sigma2_floored = false;
};

inline constexpr double kVarianceFloor = 1e-12;

// Spatial families need a geometry with geom->size() == data.d(); the
// diagonal family accepts geom == nullptr.
PosteriorState e_step(const Dataset& data, const ModelParams& params, const GridGeometry* geom);

struct SigmaUpdate {
  double sigma2;
  bool floored;
};
SigmaUpdate m_step_sigma2(const Dataset& data, const PosteriorState& posterior);

double m_step_diagonal(const PosteriorState& posterior, Index d);

struct MStepOptions {
  double phi_min = 1e-2;
  std::optional<double> phi_max;
  double alpha_eps = 1e-4;
  OptOptions inner{};
  bool analytic_wcar_gradient = false;
  bool analytic_matern_gradient = false;
};

struct FamilyUpdate {
  CovarianceFamily family;
  double objective = 0.0;           // profile objective at the returned parameters
  double incoming_objective = 0.0;  // profile objective at the incoming parameters
  bool stalled = false;
  int inner_iterations = 0;
};

// Profile objectives of the covariance M-steps, to be maximised:
//   Matern: -logdet R(phi) - d ln Tr(R(phi)^{-1} M)
//   WCAR:   logdet(D - alpha A) - d ln Tr((D - alpha A) M)
double matern_profile_objective(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                                double range);
double wcar_profile_objective(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                              double alpha);
// Analytic d/dalpha of the WCAR profile objective:
//   -Tr((D - alpha A)^{-1} A) + d Tr(A M) / Tr((D - alpha A) M)
double wcar_profile_gradient(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                             double alpha);
// Analytic d/dphi of the Matern profile objective:
//   -Tr(R^{-1} R') + d Tr(R^{-1} R' R^{-1} M) / Tr(R^{-1} M)
double matern_profile_gradient(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                               double range);

FamilyUpdate m_step_matern(const PosteriorState& posterior, const GridGeometry& geom,
                           const CovarianceFamily& current, const MStepOptions& opts = {});
FamilyUpdate m_step_wcar(const PosteriorState& posterior, const GridGeometry& geom,
                         const CovarianceFamily& current, const MStepOptions& opts = {});

// Same updates with an explicit second-moment matrix in place of E[beta beta^T | y].
FamilyUpdate fit_matern_moment(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                               const CovarianceFamily& current, const MStepOptions& opts = {});
FamilyUpdate fit_wcar_moment(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                             const CovarianceFamily& current, const MStepOptions& opts = {});

// Constant prior mean level xi = 1^T P mu / 1^T P 1, P the prior precision.
double m_step_mean(const PosteriorState& posterior, const CovarianceFamily& family,
                   const GridGeometry* geom);

enum class LikelihoodRoute { automatic, woodbury, dense };

// log N(y; X m, X Sigma X^T + sigma2 I). automatic uses the d x d
// (determinant lemma + Woodbury) form when n > d and the n x n form otherwise.
double marginal_log_likelihood(const Dataset& data, const ModelParams& params,
                               const GridGeometry* geom,
                               LikelihoodRoute route = LikelihoodRoute::automatic);

// Default starting parameters for a family (see README for the rules).
ModelParams initial_params(const Dataset& data, FamilyKind kind, const GridGeometry* geom);

FitResult em_fit(const Dataset& data, FamilyKind kind, const GridGeometry* geom,
                 const EmConfig& config = {});

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

// Predictions in model space (centred coordinates when the fit was centred).
Prediction posterior_predict(const Eigen::MatrixXd& X_new, const FitResult& fit);

// Gradient of ||y - X b||^2 / sigma2 + b^T P b at b, P the prior precision.
Eigen::VectorXd generalized_ridge_gradient(const Dataset& data, const ModelParams& params,
                                           const GridGeometry* geom, const Eigen::VectorXd& b);

}  // namespace ridgeem
