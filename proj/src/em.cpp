#include "ridgeem/em.hpp"

#include "em_internal.hpp"
#include "linalg.hpp"
#include "ridgeem/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ridgeem {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2 pi)
constexpr double kMonotoneSlack = 1e-8;

std::string describe(const ModelParams& p) {
  std::ostringstream os;
  os.precision(10);
  os << "sigma2=" << p.sigma2;
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Diagonal>) os << " sigma_beta2=" << f.variance;
        if constexpr (std::is_same_v<T, Matern>) os << " sigma_beta2=" << f.variance << " phi=" << f.range;
        if constexpr (std::is_same_v<T, Wcar>) os << " tau2=" << f.tau2 << " alpha=" << f.alpha;
      },
      p.family);
  if (p.mean && p.mean->size() > 0) os << " mean[0]=" << (*p.mean)(0);
  return os.str();
}

void check_shapes(const Dataset& data, const ModelParams& params, const GridGeometry* geom) {
  if (data.n() < 1 || data.d() < 1) throw std::invalid_argument("dataset must be non-empty");
  if (data.y.size() != data.n()) throw std::invalid_argument("y and X disagree on the sample size");
  if (!(params.sigma2 > 0.0) || !std::isfinite(params.sigma2))
    throw std::invalid_argument("residual variance must be positive");
  validate(params.family);
  if (kind_of(params.family) != FamilyKind::diagonal && geom == nullptr)
    throw std::invalid_argument(std::string(to_string(kind_of(params.family))) +
                                " prior needs a site geometry");
  if (geom && geom->size() != data.d())
    throw std::invalid_argument("geometry has " + std::to_string(geom->size()) +
                                " sites but X has " + std::to_string(data.d()) + " columns");
  if (params.mean && (params.mean->size() != data.d() || !params.mean->allFinite()))
    throw std::invalid_argument("prior mean must be finite with one entry per site");
}

struct EStepOutput {
  PosteriorState posterior;
  double log_likelihood;  // Woodbury route, always available as a by-product
};

EStepOutput e_step_core(const detail::Moments& mom, const ModelParams& params,
                        const detail::PriorTerms& prior) {
  const double s2 = params.sigma2;
  Eigen::MatrixXd a = prior.precision + mom.XtX / s2;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !llt.matrixLLT().diagonal().allFinite())
    throw NumericalError("posterior precision is singular at " + describe(params));

  EStepOutput out;
  PosteriorState& post = out.posterior;
  post.cov = detail::inverse_spd(llt);
  Eigen::VectorXd rhs = mom.Xty / s2;
  if (params.mean) rhs = prior.precision * *params.mean + rhs;
  post.mu = llt.solve(rhs);
  post.second_moment = post.cov + post.mu * post.mu.transpose();
  post.expected_rss = mom.yty - 2.0 * mom.Xty.dot(post.mu) +
                      detail::trace_product(mom.XtX, post.second_moment);

  // residual r = y - X m
  double rtr = mom.yty;
  Eigen::VectorXd xtr = mom.Xty;
  if (params.mean) {
    const Eigen::VectorXd& m = *params.mean;
    rtr = mom.yty - 2.0 * m.dot(mom.Xty) + m.dot(mom.XtX * m);
    xtr = mom.Xty - mom.XtX * m;
  }
  const Eigen::VectorXd b = xtr / s2;
  const double quad = rtr / s2 - b.dot(llt.solve(b));
  const double n = static_cast<double>(mom.n);
  const double log_det_c = n * std::log(s2) - prior.logdet_precision + detail::log_det(llt);
  out.log_likelihood = -0.5 * (n * kLog2Pi + log_det_c + quad);
  return out;
}

Eigen::MatrixXd prior_covariance(const CovarianceFamily& family, const GridGeometry* geom, Index d) {
  if (const auto* f = std::get_if<Diagonal>(&family))
    return f->variance * Eigen::MatrixXd::Identity(d, d);
  if (const auto* f = std::get_if<Matern>(&family)) {
    Eigen::MatrixXd k = matern_correlation(*geom, f->range) * f->variance;
    return k;
  }
  return covariance_matrix(family, *geom);
}

double dense_log_likelihood(const Dataset& data, const ModelParams& params, const GridGeometry* geom) {
  const Index n = data.n();
  const Eigen::MatrixXd sigma = prior_covariance(params.family, geom, data.d());
  Eigen::MatrixXd c = data.X * sigma * data.X.transpose();
  c = 0.5 * (c + c.transpose());
  c.diagonal().array() += params.sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw ModelError("marginal covariance is not positive definite at " + describe(params));
  Eigen::VectorXd r = data.y;
  if (params.mean) r -= data.X * *params.mean;
  const double quad = r.dot(llt.solve(r));
  return -0.5 * (static_cast<double>(n) * kLog2Pi + detail::log_det(llt) + quad);
}

double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

namespace detail {

Moments moments(const Dataset& data) {
  Moments m;
  m.XtX.noalias() = data.X.transpose() * data.X;
  m.Xty.noalias() = data.X.transpose() * data.y;
  m.yty = data.y.squaredNorm();
  m.n = data.n();
  return m;
}

PriorTerms prior_terms(const CovarianceFamily& family, const GridGeometry* geom, Index d) {
  validate(family);
  PriorTerms t;
  if (const auto* f = std::get_if<Diagonal>(&family)) {
    t.precision = Eigen::MatrixXd::Identity(d, d) / f->variance;
    t.logdet_precision = -static_cast<double>(d) * std::log(f->variance);
    return t;
  }
  if (geom == nullptr) throw std::invalid_argument("spatial prior needs a site geometry");
  if (const auto* f = std::get_if<Matern>(&family)) {
    const auto llt = factor_spd(matern_correlation(*geom, f->range) * f->variance,
                                "Matern covariance (phi=" + std::to_string(f->range) + ")");
    t.precision = inverse_spd(llt);
    t.logdet_precision = -log_det(llt);
    return t;
  }
  const auto& w = std::get<Wcar>(family);
  if (geom->has_isolated_sites())
    throw std::invalid_argument("CAR prior needs every site to have at least one neighbour");
  const Eigen::MatrixXd q = car_structure(*geom, w.alpha);
  const auto llt = factor_spd(q, "CAR precision (alpha=" + std::to_string(w.alpha) + ")");
  t.precision = q / w.tau2;
  t.logdet_precision = log_det(llt) - static_cast<double>(d) * std::log(w.tau2);
  return t;
}

}  // namespace detail

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::tolerance:
      return "tolerance";
    case StopReason::max_iterations:
      return "max_iterations";
    case StopReason::stalled:
      return "stalled";
  }
  return "unknown";
}

Dataset make_dataset(Eigen::VectorXd y, Eigen::MatrixXd X, bool center) {
  if (X.rows() < 1 || X.cols() < 1) throw std::invalid_argument("dataset must be non-empty");
  if (y.size() != X.rows()) throw std::invalid_argument("y and X disagree on the sample size");
  if (!y.allFinite() || !X.allFinite()) throw std::invalid_argument("dataset has non-finite entries");
  Dataset data;
  data.centered = center;
  if (center) {
    data.y_mean = y.mean();
    data.x_mean = X.colwise().mean().transpose();
    y.array() -= data.y_mean;
    X.rowwise() -= data.x_mean.transpose();
  } else {
    data.x_mean = Eigen::VectorXd::Zero(X.cols());
  }
  data.y = std::move(y);
  data.X = std::move(X);
  return data;
}

PosteriorState e_step(const Dataset& data, const ModelParams& params, const GridGeometry* geom) {
  check_shapes(data, params, geom);
  const detail::Moments mom = detail::moments(data);
  const detail::PriorTerms prior = detail::prior_terms(params.family, geom, data.d());
  return e_step_core(mom, params, prior).posterior;
}

double marginal_log_likelihood(const Dataset& data, const ModelParams& params,
                               const GridGeometry* geom, LikelihoodRoute route) {
  check_shapes(data, params, geom);
  if (route == LikelihoodRoute::automatic)
    route = data.n() > data.d() ? LikelihoodRoute::woodbury : LikelihoodRoute::dense;
  if (route == LikelihoodRoute::dense) return dense_log_likelihood(data, params, geom);
  const detail::Moments mom = detail::moments(data);
  const detail::PriorTerms prior = detail::prior_terms(params.family, geom, data.d());
  return e_step_core(mom, params, prior).log_likelihood;
}

ModelParams initial_params(const Dataset& data, FamilyKind kind, const GridGeometry* geom) {
  const double vy = sample_variance(data.y);
  const double signal_scale = data.X.squaredNorm() / static_cast<double>(data.n());
  ModelParams p;
  p.sigma2 = vy > 0.0 ? 0.5 * vy : 1.0;
  const double prior_var = (vy > 0.0 && signal_scale > 0.0) ? 0.5 * vy / signal_scale : 1.0;
  switch (kind) {
    case FamilyKind::diagonal:
      p.family = Diagonal{prior_var};
      break;
    case FamilyKind::matern:
      if (!geom) throw std::invalid_argument("matern prior needs a site geometry");
      p.family = Matern{prior_var, 0.25 * geom->diameter()};
      break;
    case FamilyKind::wcar:
      if (!geom) throw std::invalid_argument("wcar prior needs a site geometry");
      p.family = Wcar{prior_var, 0.5};
      break;
  }
  return p;
}

FitResult em_fit(const Dataset& data, FamilyKind kind, const GridGeometry* geom,
                 const EmConfig& config) {
  if (config.max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
  if (!(config.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (!data.y.allFinite() || !data.X.allFinite())
    throw std::invalid_argument("dataset has non-finite entries");

  ModelParams params = config.start ? *config.start : initial_params(data, kind, geom);
  if (kind_of(params.family) != kind)
    throw std::invalid_argument("start parameters belong to a different family");
  if (config.mean_mode == MeanMode::zero) {
    params.mean.reset();
  } else if (!params.mean) {
    params.mean = Eigen::VectorXd::Constant(data.d(), config.mean_level);
  }
  check_shapes(data, params, geom);

  MStepOptions mopts;
  mopts.phi_min = config.phi_min;
  mopts.phi_max = config.phi_max;
  mopts.alpha_eps = config.alpha_eps;
  mopts.inner = config.inner;
  mopts.analytic_wcar_gradient = config.analytic_wcar_gradient;
  mopts.analytic_matern_gradient = config.analytic_matern_gradient;

  const detail::Moments mom = detail::moments(data);
  std::optional<detail::CarSpectrum> spectrum;
  if (kind == FamilyKind::wcar) spectrum.emplace(*geom);
  const bool dense_monitor = data.n() <= data.d();
  const Index d = data.d();

  auto evaluate = [&](const ModelParams& p, detail::PriorTerms& prior) {
    prior = detail::prior_terms(p.family, geom, d);
    EStepOutput out = e_step_core(mom, p, prior);
    if (dense_monitor) out.log_likelihood = dense_log_likelihood(data, p, geom);
    return out;
  };

  FitResult fit;
  detail::PriorTerms prior;
  EStepOutput current;
  try {
    current = evaluate(params, prior);
  } catch (const std::exception& e) {
    throw NumericalError(std::string("initial E-step failed: ") + e.what(), 0);
  }
  fit.loglik_trace.push_back(current.log_likelihood);

  for (int it = 1; it <= config.max_iter; ++it) {
    ModelParams next = params;
    detail::PriorTerms next_prior;
    EStepOutput next_out;
    bool floored = false;
    try {
      const PosteriorState& post = current.posterior;
      double s2 = post.expected_rss / static_cast<double>(mom.n);
      if (!(s2 > kVarianceFloor)) {
        s2 = kVarianceFloor;
        floored = true;
      }
      next.sigma2 = s2;

      Eigen::MatrixXd moment = post.second_moment;
      if (params.mean) {
        if (config.mean_mode == MeanMode::estimated_constant) {
          const Eigen::VectorXd p1 = prior.precision.rowwise().sum();
          const double level = p1.dot(post.mu) / p1.sum();
          next.mean = Eigen::VectorXd::Constant(d, level);
        }
        const Eigen::VectorXd dev = post.mu - *next.mean;
        moment = post.cov + dev * dev.transpose();
      }

      switch (kind) {
        case FamilyKind::diagonal:
          next.family = Diagonal{std::max(moment.trace() / static_cast<double>(d), kVarianceFloor)};
          break;
        case FamilyKind::matern:
          next.family = detail::fit_matern_factor(detail::moment_factor(moment), *geom,
                                                  std::get<Matern>(params.family), mopts)
                            .family;
          break;
        case FamilyKind::wcar: {
          const double tr_d = geom->neighbor_counts.dot(moment.diagonal());
          const double tr_a = detail::trace_product(geom->adjacency, moment);
          next.family = detail::fit_wcar_trace(tr_d, tr_a, *spectrum, d,
                                               std::get<Wcar>(params.family), mopts)
                            .family;
          break;
        }
      }
      next_out = evaluate(next, next_prior);
    } catch (const std::exception& e) {
      throw NumericalError("EM iteration " + std::to_string(it) + " failed: " + e.what(), it);
    }

    const double prev = current.log_likelihood;
    const double now = next_out.log_likelihood;
    if (!std::isfinite(now) || now < prev - kMonotoneSlack) {
      fit.stop_reason = StopReason::stalled;
      break;
    }
    params = std::move(next);
    prior = std::move(next_prior);
    current = std::move(next_out);
    fit.sigma2_floored = floored;
    fit.loglik_trace.push_back(now);
    fit.iterations = it;
    if (std::abs(now - prev) / (1.0 + std::abs(prev)) < config.tol) {
      fit.converged = true;
      fit.stop_reason = StopReason::tolerance;
      break;
    }
  }
  fit.params = std::move(params);
  fit.posterior = std::move(current.posterior);
  return fit;
}

Prediction posterior_predict(const Eigen::MatrixXd& X_new, const FitResult& fit) {
  const Index d = fit.posterior.mu.size();
  if (X_new.cols() != d)
    throw std::invalid_argument("new design has " + std::to_string(X_new.cols()) +
                                " columns, the fit has " + std::to_string(d));
  Prediction p;
  p.mean = X_new * fit.posterior.mu;
  p.variance = ((X_new * fit.posterior.cov).array() * X_new.array()).rowwise().sum().matrix();
  p.variance.array() = p.variance.array().max(0.0) + fit.params.sigma2;
  return p;
}

Eigen::VectorXd generalized_ridge_gradient(const Dataset& data, const ModelParams& params,
                                           const GridGeometry* geom, const Eigen::VectorXd& b) {
  check_shapes(data, params, geom);
  const detail::PriorTerms prior = detail::prior_terms(params.family, geom, data.d());
  Eigen::VectorXd dev = b;
  if (params.mean) dev -= *params.mean;
  return 2.0 * (prior.precision * dev - data.X.transpose() * (data.y - data.X * b) / params.sigma2);
}

}  // namespace ridgeem
