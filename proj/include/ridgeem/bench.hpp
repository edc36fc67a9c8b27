#pragma once

#include "ridgeem/covariance.hpp"
#include "ridgeem/em.hpp"
#include "ridgeem/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace ridgeem {

enum class NoiseKind { gaussian, uniform };

struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian;
  double lower = 2.0;  // uniform support
  double upper = 30.0;
};

struct SimConfig {
  int rows = 15;
  int cols = 15;
  Index n = 800;
  CovarianceFamily x_family = Matern{6.0, 2.0};
  CovarianceFamily beta_family = Diagonal{7.0};
  double sigma2 = 36.0;  // gaussian noise variance; ignored for uniform noise
  NoiseModel noise{};
  std::uint64_t seed = 0;
  double test_fraction = 0.5;  // test rows = ceil(test_fraction * n), drawn after the training rows
};

void validate(const SimConfig& cfg);

struct SimulatedData {
  GridGeometry geom;
  Dataset train;  // raw (not centred)
  Dataset test;   // raw, disjoint rows
  Eigen::VectorXd true_beta;
};

SimulatedData simulate_dataset(const SimConfig& cfg);

// Maps raw rows into the centred coordinates of a fitted training set.
Eigen::MatrixXd to_model_space(const Eigen::MatrixXd& X_raw, const Dataset& train);
// Predictions on the raw response scale.
Eigen::VectorXd predict_response(const Eigen::MatrixXd& X_raw, const Dataset& train,
                                 const Eigen::VectorXd& beta);

double nrmse_beta(const Eigen::VectorXd& true_beta, const Eigen::VectorXd& est_beta);
double nrmse_y(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

// Parameters maximising the complete-data likelihood with beta known.
ModelParams mle_oracle(const Dataset& data, const Eigen::VectorXd& true_beta, FamilyKind kind,
                       const GridGeometry* geom, const MStepOptions& opts = {});

struct CvResult {
  Eigen::VectorXd beta;
  double lambda = 0.0;
  Eigen::VectorXd cv_error;  // mean held-out squared error per grid point
  std::vector<int> fold_of;  // fold index of every observation
};

// 50 points log-spaced on [1e-4, 1e4].
std::vector<double> default_lambda_grid();

// k-fold cross-validated ridge (X^T X + lambda I)^{-1} X^T y. The CV score is
// the mean over folds of the held-out mean squared error.
CvResult cv_ridge_baseline(const Dataset& data, int k, const std::vector<double>& lambda_grid,
                           std::uint64_t seed);

enum class ExperimentKind {
  nrmse_vs_n,
  params_vs_n_d_sigma,
  misspecification,
  em_vs_cv_gaussian,
  em_vs_cv_uniform
};

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

// The beta prior used for each family in the reference scenario:
// diagonal(7), matern(0.1, 4), wcar(1, 0.9).
CovarianceFamily reference_family(FamilyKind kind);

struct ExperimentDesign {
  ExperimentKind kind = ExperimentKind::nrmse_vs_n;
  int replicates = 20;
  std::uint64_t base_seed = 1;
  // Empty vectors select the defaults of the experiment.
  std::vector<Index> n_values;
  std::vector<int> grid_sides;
  std::vector<double> sigma2_values;
  std::vector<FamilyKind> families;
  int cv_folds = 10;
  std::vector<double> lambda_grid;
  EmConfig em{};
  int threads = 1;
  bool record_timing = false;
};

struct ReplicateRecord {
  std::string experiment;
  Index n = 0;
  Index d = 0;
  double sigma2 = 0.0;
  std::string family_true;
  std::string family_fit;
  std::string method;  // em, mle or cv
  std::uint64_t seed = 0;
  double sigma2_hat = 0.0;
  double sigma_beta2_hat = 0.0;  // diagonal and Matern variance
  double phi_hat = 0.0;
  double tau2_hat = 0.0;
  double alpha_hat = 0.0;
  double lambda_hat = 0.0;
  double nrmse_beta = 0.0;
  double nrmse_y = 0.0;
  int iterations = 0;
  double wall_ms = 0.0;
  std::string status;  // ok, not_converged, failed: <reason>
};

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

// Type-7 (linear interpolation) sample quantiles; NaNs are skipped.
Quartiles quartiles(std::vector<double> values);

struct AggregateRow {
  std::string experiment;
  Index n = 0;
  Index d = 0;
  double sigma2 = 0.0;
  std::string family_true;
  std::string family_fit;
  std::string method;
  int count = 0;
  int failed = 0;
  std::vector<std::pair<std::string, Quartiles>> metrics;
};

struct ExperimentReport {
  std::vector<std::pair<std::string, std::string>> header;  // design parameters
  std::vector<ReplicateRecord> records;
  std::vector<AggregateRow> aggregates;
};

ExperimentReport run_experiment(const ExperimentDesign& design);

std::vector<AggregateRow> aggregate(const std::vector<ReplicateRecord>& records);

// Per-replicate CSV, preceded by '#'-prefixed design lines. wall_ms is
// written only when timing was recorded, so reruns are byte-identical.
void write_records_csv(const ExperimentReport& report, bool timing, std::ostream& out);
void write_summary_csv(const ExperimentReport& report, std::ostream& out);

}  // namespace ridgeem
