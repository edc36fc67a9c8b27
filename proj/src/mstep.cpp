#include "em_internal.hpp"
#include "linalg.hpp"
#include "ridgeem/em.hpp"
#include "ridgeem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ridgeem {

namespace detail {

CarSpectrum::CarSpectrum(const GridGeometry& geom) {
  if (geom.has_isolated_sites())
    throw std::invalid_argument("CAR prior needs every site to have at least one neighbour");
  const Eigen::VectorXd inv_sqrt = geom.neighbor_counts.array().rsqrt();
  const Eigen::MatrixXd scaled = inv_sqrt.asDiagonal() * geom.adjacency * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("CAR adjacency spectrum failed");
  lambda_ = eig.eigenvalues();
  log_det_degree_ = geom.neighbor_counts.array().log().sum();
}

double CarSpectrum::log_det(double alpha) const {
  const Eigen::ArrayXd t = 1.0 - alpha * lambda_.array();
  if ((t <= 0.0).any()) return -std::numeric_limits<double>::infinity();
  return log_det_degree_ + t.log().sum();
}

double CarSpectrum::log_det_derivative(double alpha) const {
  return -(lambda_.array() / (1.0 - alpha * lambda_.array())).sum();
}

Eigen::MatrixXd moment_factor(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().allFinite())
    return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw NumericalError("second moment eigen-decomposition failed");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Tr(R^{-1} M) and logdet R for M = C C^T; nullopt if R does not factor.
struct MaternTerms {
  double log_det_r;
  double trace;
};

std::optional<MaternTerms> matern_terms(const Eigen::MatrixXd& factor, const GridGeometry& geom,
                                        double range) {
  Eigen::LLT<Eigen::MatrixXd> llt(matern_correlation(geom, range));
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::MatrixXd z = llt.matrixL().solve(factor);
  const MaternTerms t{log_det(llt), z.squaredNorm()};
  if (!std::isfinite(t.log_det_r) || !std::isfinite(t.trace)) return std::nullopt;
  return t;
}

// d/d(log phi) of the Matern profile; nullopt if R does not factor.
std::optional<double> matern_log_range_derivative(const Eigen::MatrixXd& factor,
                                                  const GridGeometry& geom, double range) {
  const Eigen::LLT<Eigen::MatrixXd> llt(matern_correlation(geom, range));
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Index d = geom.size();
  const Eigen::MatrixXd w = llt.solve(factor);
  const double trace = factor.cwiseProduct(w).sum();
  // dR/d(log phi) = u^2 exp(-u), u = h / phi
  const Eigen::ArrayXXd u = geom.dist.array() / range;
  const Eigen::MatrixXd dr = (u.square() * (-u).exp()).matrix();
  const double tr_rinv_dr = llt.solve(Eigen::MatrixXd::Identity(d, d)).cwiseProduct(dr).sum();
  const double quad = (dr * w).cwiseProduct(w).sum();
  const double g = -tr_rinv_dr + static_cast<double>(d) * quad / std::max(trace, kVarianceFloor);
  if (!std::isfinite(g)) return std::nullopt;
  return g;
}

double matern_profile_from_terms(const MaternTerms& t, Index d) {
  return -t.log_det_r - static_cast<double>(d) * std::log(std::max(t.trace, kVarianceFloor));
}

}  // namespace

FamilyUpdate fit_matern_factor(const Eigen::MatrixXd& factor, const GridGeometry& geom,
                               const Matern& current, const MStepOptions& opts) {
  const Index d = geom.size();
  const double phi_max = opts.phi_max.value_or(10.0 * geom.diameter());
  if (!(opts.phi_min > 0.0) || !(phi_max > opts.phi_min))
    throw std::invalid_argument("Matern range bounds must satisfy 0 < phi_min < phi_max");

  // minimise the negated profile over u = log(phi)
  const Objective neg_profile = [&](const Eigen::VectorXd& u) {
    const auto t = matern_terms(factor, geom, std::exp(u(0)));
    return t ? -matern_profile_from_terms(*t, d) : kInf;
  };

  const double start_range = std::clamp(current.range, opts.phi_min, phi_max);
  BoundedProblem problem;
  problem.objective = neg_profile;
  if (opts.analytic_matern_gradient) {
    problem.gradient = [&](const Eigen::VectorXd& u) {
      const auto g = matern_log_range_derivative(factor, geom, std::exp(u(0)));
      if (!g) throw NumericalError("Matern profile gradient is not finite");
      return Eigen::VectorXd::Constant(1, -*g);
    };
  }
  problem.lower = Eigen::VectorXd::Constant(1, std::log(opts.phi_min));
  problem.upper = Eigen::VectorXd::Constant(1, std::log(phi_max));
  problem.x0 = Eigen::VectorXd::Constant(1, std::log(start_range));

  FamilyUpdate out;
  const auto incoming = matern_terms(factor, geom, current.range);
  out.incoming_objective = incoming ? matern_profile_from_terms(*incoming, d) : -kInf;

  double range = current.range;
  bool improved = false;
  if (std::isfinite(neg_profile(problem.x0))) {
    const OptResult r = minimize_bounded(problem, opts.inner);
    out.inner_iterations = r.iterations;
    if (std::isfinite(r.f_opt) && -r.f_opt >= out.incoming_objective) {
      range = std::exp(r.x_opt(0));
      improved = true;
    }
  }
  out.stalled = !improved;
  const auto t = matern_terms(factor, geom, range);
  if (!t) throw ModelError("Matern correlation does not factor at range " + std::to_string(range));
  out.objective = matern_profile_from_terms(*t, d);
  out.family = Matern{std::max(t->trace / static_cast<double>(d), kVarianceFloor), range};
  return out;
}

FamilyUpdate fit_wcar_trace(double trace_degree, double trace_adjacency, const CarSpectrum& spectrum,
                            Index d, const Wcar& current, const MStepOptions& opts) {
  const double dd = static_cast<double>(d);
  if (!(opts.alpha_eps > 0.0 && opts.alpha_eps < 1.0))
    throw std::invalid_argument("alpha_eps must lie in (0, 1)");
  const double lo = -1.0 + opts.alpha_eps;
  const double hi = 1.0 - opts.alpha_eps;

  auto smoothness = [&](double alpha) {
    return std::max(trace_degree - alpha * trace_adjacency, kVarianceFloor);
  };
  auto profile = [&](double alpha) { return spectrum.log_det(alpha) - dd * std::log(smoothness(alpha)); };

  BoundedProblem problem;
  problem.objective = [&](const Eigen::VectorXd& a) { return -profile(a(0)); };
  if (opts.analytic_wcar_gradient) {
    problem.gradient = [&](const Eigen::VectorXd& a) {
      const double alpha = a(0);
      double g = spectrum.log_det_derivative(alpha);
      if (trace_degree - alpha * trace_adjacency > kVarianceFloor)
        g += dd * trace_adjacency / smoothness(alpha);
      return Eigen::VectorXd::Constant(1, -g);
    };
  }
  problem.lower = Eigen::VectorXd::Constant(1, lo);
  problem.upper = Eigen::VectorXd::Constant(1, hi);
  problem.x0 = Eigen::VectorXd::Constant(1, std::clamp(current.alpha, lo, hi));

  FamilyUpdate out;
  out.incoming_objective = profile(current.alpha);
  const OptResult r = minimize_bounded(problem, opts.inner);
  out.inner_iterations = r.iterations;
  double alpha = current.alpha;
  if (std::isfinite(r.f_opt) && -r.f_opt >= out.incoming_objective) {
    alpha = r.x_opt(0);
  } else {
    out.stalled = true;
  }
  out.objective = profile(alpha);
  out.family = Wcar{std::max(smoothness(alpha) / dd, kVarianceFloor), alpha};
  return out;
}

}  // namespace detail

SigmaUpdate m_step_sigma2(const Dataset& data, const PosteriorState& posterior) {
  if (posterior.mu.size() != data.d() || posterior.second_moment.rows() != data.d())
    throw std::invalid_argument("posterior dimension does not match the dataset");
  const detail::Moments mom = detail::moments(data);
  const double rss = mom.yty - 2.0 * mom.Xty.dot(posterior.mu) +
                     detail::trace_product(mom.XtX, posterior.second_moment);
  const double s2 = rss / static_cast<double>(data.n());
  if (!(s2 > kVarianceFloor)) return {kVarianceFloor, true};
  return {s2, false};
}

double m_step_diagonal(const PosteriorState& posterior, Index d) {
  if (d < 1) throw std::invalid_argument("dimension must be positive");
  return std::max(posterior.second_moment.trace() / static_cast<double>(d), kVarianceFloor);
}

double matern_profile_objective(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                                double range) {
  if (!(range > 0.0)) throw std::invalid_argument("Matern range must be positive");
  const Eigen::MatrixXd c = detail::moment_factor(second_moment);
  const auto llt = detail::factor_spd(matern_correlation(geom, range), "Matern correlation");
  const double tr = llt.matrixL().solve(c).squaredNorm();
  return -detail::log_det(llt) -
         static_cast<double>(geom.size()) * std::log(std::max(tr, kVarianceFloor));
}

double matern_profile_gradient(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                               double range) {
  const auto g = detail::matern_log_range_derivative(detail::moment_factor(second_moment), geom, range);
  if (!g) throw NumericalError("Matern correlation does not factor at range " + std::to_string(range));
  return *g / range;
}

double wcar_profile_objective(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                              double alpha) {
  const Eigen::MatrixXd q = car_structure(geom, alpha);
  const auto llt = detail::factor_spd(q, "CAR precision");
  const double tr = detail::trace_product(q, second_moment);
  return detail::log_det(llt) -
         static_cast<double>(geom.size()) * std::log(std::max(tr, kVarianceFloor));
}

double wcar_profile_gradient(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                             double alpha) {
  const Eigen::MatrixXd q = car_structure(geom, alpha);
  const auto llt = detail::factor_spd(q, "CAR precision");
  const double log_det_term = -llt.solve(geom.adjacency).trace();
  const double tr_a = detail::trace_product(geom.adjacency, second_moment);
  const double tr_q = detail::trace_product(q, second_moment);
  return log_det_term + static_cast<double>(geom.size()) * tr_a / tr_q;
}

FamilyUpdate fit_matern_moment(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                               const CovarianceFamily& current, const MStepOptions& opts) {
  const auto* m = std::get_if<Matern>(&current);
  if (!m) throw std::invalid_argument("Matern M-step needs a Matern family");
  if (second_moment.rows() != geom.size())
    throw std::invalid_argument("second moment does not match the geometry");
  return detail::fit_matern_factor(detail::moment_factor(second_moment), geom, *m, opts);
}

FamilyUpdate fit_wcar_moment(const Eigen::MatrixXd& second_moment, const GridGeometry& geom,
                             const CovarianceFamily& current, const MStepOptions& opts) {
  const auto* w = std::get_if<Wcar>(&current);
  if (!w) throw std::invalid_argument("CAR M-step needs a WCAR family");
  if (second_moment.rows() != geom.size())
    throw std::invalid_argument("second moment does not match the geometry");
  const detail::CarSpectrum spectrum(geom);
  const double tr_d = geom.neighbor_counts.dot(second_moment.diagonal());
  const double tr_a = detail::trace_product(geom.adjacency, second_moment);
  return detail::fit_wcar_trace(tr_d, tr_a, spectrum, geom.size(), *w, opts);
}

FamilyUpdate m_step_matern(const PosteriorState& posterior, const GridGeometry& geom,
                           const CovarianceFamily& current, const MStepOptions& opts) {
  return fit_matern_moment(posterior.second_moment, geom, current, opts);
}

FamilyUpdate m_step_wcar(const PosteriorState& posterior, const GridGeometry& geom,
                         const CovarianceFamily& current, const MStepOptions& opts) {
  return fit_wcar_moment(posterior.second_moment, geom, current, opts);
}

double m_step_mean(const PosteriorState& posterior, const CovarianceFamily& family,
                   const GridGeometry* geom) {
  const Index d = posterior.mu.size();
  const detail::PriorTerms prior = detail::prior_terms(family, geom, d);
  const Eigen::VectorXd p1 = prior.precision.rowwise().sum();
  const double denom = p1.sum();
  if (!(denom > 0.0)) throw NumericalError("prior precision has a non-positive total weight");
  return p1.dot(posterior.mu) / denom;
}

}  // namespace ridgeem
