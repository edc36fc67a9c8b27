#include "em_internal.hpp"
#include "linalg.hpp"
#include "random.hpp"
#include "ridgeem/bench.hpp"
#include "ridgeem/errors.hpp"
#include "ridgeem/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ridgeem {

namespace {

double sample_sd(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

double rms_difference(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ss = kernels::sum_sq_diff({a.data(), static_cast<std::size_t>(a.size())},
                                         {b.data(), static_cast<std::size_t>(b.size())});
  return std::sqrt(ss / static_cast<double>(a.size()));
}

void check_pair(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(what) + ": vectors differ in length");
  if (a.size() < 2) throw std::invalid_argument(std::string(what) + ": needs at least two entries");
}

Eigen::MatrixXd draw_rows(const Eigen::MatrixXd& lower, Index rows, detail::Engine& rng) {
  const Index d = lower.rows();
  Eigen::MatrixXd z(rows, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < d; ++j) z(i, j) = normal(rng);
  return z * lower.transpose();
}

Eigen::VectorXd draw_noise(const NoiseModel& noise, double sigma2, Index rows, detail::Engine& rng) {
  Eigen::VectorXd e(rows);
  if (noise.kind == NoiseKind::uniform) {
    std::uniform_real_distribution<double> u(noise.lower, noise.upper);
    for (Index i = 0; i < rows; ++i) e(i) = u(rng);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(sigma2);
    for (Index i = 0; i < rows; ++i) e(i) = sd * normal(rng);
  }
  return e;
}

Dataset raw_dataset(Eigen::VectorXd y, Eigen::MatrixXd X) {
  Dataset data;
  data.y = std::move(y);
  data.X = std::move(X);
  data.x_mean = Eigen::VectorXd::Zero(data.X.cols());
  return data;
}

}  // namespace

void validate(const SimConfig& cfg) {
  if (cfg.n < 2) throw std::invalid_argument("simulation needs n >= 2");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must lie in (0, 1)");
  if (cfg.noise.kind == NoiseKind::uniform && !(cfg.noise.lower < cfg.noise.upper))
    throw std::invalid_argument("uniform noise needs lower < upper");
  if (cfg.noise.kind == NoiseKind::gaussian && !(cfg.sigma2 >= 0.0))
    throw std::invalid_argument("noise variance must be non-negative");
  validate(cfg.x_family);
  validate(cfg.beta_family);
}

SimulatedData simulate_dataset(const SimConfig& cfg) {
  validate(cfg);
  SimulatedData sim;
  sim.geom = build_grid_geometry(cfg.rows, cfg.cols);
  const Index n_test = static_cast<Index>(std::ceil(cfg.test_fraction * static_cast<double>(cfg.n)));

  sim.true_beta = sample_coefficients(cfg.beta_family, sim.geom, detail::derive_seed(cfg.seed, 0));

  Eigen::MatrixXd sigma_x = covariance_matrix(cfg.x_family, sim.geom);
  if (const auto* m = std::get_if<Matern>(&cfg.x_family))
    sigma_x.diagonal().array() += kMaternJitter * m->variance;
  const Eigen::MatrixXd lower = detail::factor_spd(sigma_x, "covariate covariance").matrixL();

  detail::Engine x_rng(detail::derive_seed(cfg.seed, 1));
  Eigen::MatrixXd x_train = draw_rows(lower, cfg.n, x_rng);
  Eigen::MatrixXd x_test = draw_rows(lower, n_test, x_rng);

  detail::Engine e_rng(detail::derive_seed(cfg.seed, 2));
  Eigen::VectorXd e_train = draw_noise(cfg.noise, cfg.sigma2, cfg.n, e_rng);
  Eigen::VectorXd e_test = draw_noise(cfg.noise, cfg.sigma2, n_test, e_rng);

  Eigen::VectorXd y_train = x_train * sim.true_beta + e_train;
  Eigen::VectorXd y_test = x_test * sim.true_beta + e_test;
  sim.train = raw_dataset(std::move(y_train), std::move(x_train));
  sim.test = raw_dataset(std::move(y_test), std::move(x_test));
  return sim;
}

Eigen::MatrixXd to_model_space(const Eigen::MatrixXd& X_raw, const Dataset& train) {
  if (X_raw.cols() != train.d()) throw std::invalid_argument("column count mismatch");
  if (!train.centered) return X_raw;
  return X_raw.rowwise() - train.x_mean.transpose();
}

Eigen::VectorXd predict_response(const Eigen::MatrixXd& X_raw, const Dataset& train,
                                 const Eigen::VectorXd& beta) {
  Eigen::VectorXd pred = to_model_space(X_raw, train) * beta;
  if (train.centered) pred.array() += train.y_mean;
  return pred;
}

double nrmse_beta(const Eigen::VectorXd& true_beta, const Eigen::VectorXd& est_beta) {
  check_pair(true_beta, est_beta, "nrmse_beta");
  const double sd = sample_sd(true_beta);
  if (!(sd > 0.0)) throw std::invalid_argument("nrmse_beta: true coefficients are constant");
  return rms_difference(true_beta, est_beta) / sd;
}

double nrmse_y(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  check_pair(y_true, y_pred, "nrmse_y");
  const double sd = sample_sd(y_true);
  if (!(sd > 0.0)) throw std::invalid_argument("nrmse_y: response is constant");
  return rms_difference(y_true, y_pred) / sd;
}

ModelParams mle_oracle(const Dataset& data, const Eigen::VectorXd& true_beta, FamilyKind kind,
                       const GridGeometry* geom, const MStepOptions& opts) {
  const Index d = data.d();
  if (true_beta.size() != d) throw std::invalid_argument("true beta length differs from X columns");
  if (kind != FamilyKind::diagonal && (geom == nullptr || geom->size() != d))
    throw std::invalid_argument("spatial oracle needs a matching geometry");
  ModelParams p;
  const Eigen::VectorXd resid = data.y - data.X * true_beta;
  p.sigma2 = std::max(resid.squaredNorm() / static_cast<double>(data.n()), kVarianceFloor);
  switch (kind) {
    case FamilyKind::diagonal:
      p.family = Diagonal{std::max(true_beta.squaredNorm() / static_cast<double>(d), kVarianceFloor)};
      break;
    case FamilyKind::matern: {
      const Matern start{1.0, 0.25 * geom->diameter()};
      p.family = detail::fit_matern_factor(true_beta, *geom, start, opts).family;
      break;
    }
    case FamilyKind::wcar: {
      const detail::CarSpectrum spectrum(*geom);
      const double tr_d = geom->neighbor_counts.dot(true_beta.cwiseAbs2());
      const double tr_a = true_beta.dot(geom->adjacency * true_beta);
      p.family = detail::fit_wcar_trace(tr_d, tr_a, spectrum, d, Wcar{1.0, 0.5}, opts).family;
      break;
    }
  }
  return p;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid(50);
  for (int i = 0; i < 50; ++i) grid[i] = std::pow(10.0, -4.0 + 8.0 * i / 49.0);
  return grid;
}

CvResult cv_ridge_baseline(const Dataset& data, int k, const std::vector<double>& lambda_grid,
                           std::uint64_t seed) {
  const Index n = data.n();
  const Index d = data.d();
  if (k < 2) throw std::invalid_argument("cross-validation needs at least two folds");
  if (n < k) throw std::invalid_argument("every fold needs at least one observation");
  if (lambda_grid.empty()) throw std::invalid_argument("lambda grid is empty");
  for (double l : lambda_grid)
    if (!(l > 0.0) || !std::isfinite(l)) throw std::invalid_argument("lambda grid must be positive");

  CvResult res;
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  detail::Engine rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  res.fold_of.assign(n, 0);
  for (Index i = 0; i < n; ++i) res.fold_of[perm[i]] = static_cast<int>(i % k);

  const detail::Moments all = detail::moments(data);
  const Index m = static_cast<Index>(lambda_grid.size());
  res.cv_error = Eigen::VectorXd::Zero(m);

  for (int fold = 0; fold < k; ++fold) {
    std::vector<Index> held;
    for (Index i = 0; i < n; ++i)
      if (res.fold_of[i] == fold) held.push_back(i);
    const Index h = static_cast<Index>(held.size());
    Eigen::MatrixXd xh(h, d);
    Eigen::VectorXd yh(h);
    for (Index r = 0; r < h; ++r) {
      xh.row(r) = data.X.row(held[r]);
      yh(r) = data.y(held[r]);
    }
    const Eigen::MatrixXd xtx = all.XtX - xh.transpose() * xh;
    const Eigen::VectorXd xty = all.Xty - xh.transpose() * yh;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (xtx + xtx.transpose()));
    if (eig.info() != Eigen::Success) throw NumericalError("fold Gram matrix eigen-decomposition failed");
    const Eigen::VectorXd w = eig.eigenvectors().transpose() * xty;
    const Eigen::MatrixXd xv = xh * eig.eigenvectors();
    for (Index l = 0; l < m; ++l) {
      const Eigen::VectorXd coef =
          w.array() / (eig.eigenvalues().array() + lambda_grid[static_cast<std::size_t>(l)]);
      const Eigen::VectorXd resid = yh - xv * coef;
      res.cv_error(l) += resid.squaredNorm() / static_cast<double>(h);
    }
  }
  res.cv_error /= static_cast<double>(k);

  Index best = 0;
  res.cv_error.minCoeff(&best);
  res.lambda = lambda_grid[static_cast<std::size_t>(best)];
  Eigen::MatrixXd a = all.XtX;
  a.diagonal().array() += res.lambda;
  res.beta = detail::factor_spd(a, "ridge system").solve(all.Xty);
  return res;
}

}  // namespace ridgeem
