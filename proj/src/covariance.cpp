#include "ridgeem/covariance.hpp"

#include "linalg.hpp"
#include "random.hpp"
#include "ridgeem/errors.hpp"
#include "ridgeem/kernels.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ridgeem {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_car_graph(const GridGeometry& geom) {
  if (geom.has_isolated_sites())
    throw std::invalid_argument("CAR prior needs every site to have at least one neighbour");
}

void require_distinct_sites(const GridGeometry& geom) {
  const Index d = geom.size();
  for (Index j = 0; j < d; ++j)
    for (Index i = j + 1; i < d; ++i)
      if (!(geom.dist(i, j) > 0.0)) {
        std::ostringstream os;
        os << "Matern covariance is singular: sites " << i << " and " << j
           << " share a location";
        throw ModelError(os.str());
      }
}

Eigen::MatrixXd matern_raw(const GridGeometry& geom, double variance, double range) {
  Eigen::MatrixXd k(geom.size(), geom.size());
  kernels::matern32({geom.dist.data(), static_cast<std::size_t>(geom.dist.size())}, 1.0 / range,
                    variance, {k.data(), static_cast<std::size_t>(k.size())});
  return k;
}

std::string describe(const CovarianceFamily& family) {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const Diagonal& f) { os << "diagonal(variance=" << f.variance << ")"; },
                 [&](const Matern& f) {
                   os << "matern(variance=" << f.variance << ", range=" << f.range << ")";
                 },
                 [&](const Wcar& f) { os << "wcar(tau2=" << f.tau2 << ", alpha=" << f.alpha << ")"; },
             },
             family);
  return os.str();
}

}  // namespace

FamilyKind kind_of(const CovarianceFamily& family) {
  return static_cast<FamilyKind>(family.index());
}

std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::diagonal:
      return "diagonal";
    case FamilyKind::matern:
      return "matern";
    case FamilyKind::wcar:
      return "wcar";
  }
  return "unknown";
}

FamilyKind parse_family_kind(std::string_view name) {
  if (name == "diagonal") return FamilyKind::diagonal;
  if (name == "matern") return FamilyKind::matern;
  if (name == "wcar" || name == "car") return FamilyKind::wcar;
  throw std::invalid_argument("unknown covariance family '" + std::string(name) +
                              "' (expected diagonal, matern or wcar)");
}

void validate(const CovarianceFamily& family) {
  std::visit(Overloaded{
                 [](const Diagonal& f) {
                   if (!(f.variance > 0.0) || !std::isfinite(f.variance))
                     throw std::invalid_argument("diagonal variance must be positive");
                 },
                 [](const Matern& f) {
                   if (!(f.variance > 0.0) || !std::isfinite(f.variance))
                     throw std::invalid_argument("Matern variance must be positive");
                   if (!(f.range > 0.0) || !std::isfinite(f.range))
                     throw std::invalid_argument("Matern range must be positive");
                 },
                 [](const Wcar& f) {
                   if (!(f.tau2 > 0.0) || !std::isfinite(f.tau2))
                     throw std::invalid_argument("CAR conditional variance must be positive");
                   if (!(std::abs(f.alpha) < 1.0))
                     throw std::invalid_argument("CAR dependence must satisfy |alpha| < 1");
                 },
             },
             family);
}

double matern_kernel(double h, double variance, double range) {
  if (!(variance > 0.0)) throw std::invalid_argument("Matern variance must be positive");
  if (!(range > 0.0)) throw std::invalid_argument("Matern range must be positive");
  if (!(h >= 0.0)) throw std::invalid_argument("distance must be non-negative");
  const double u = h / range;
  return variance * (1.0 + u) * std::exp(-u);
}

Eigen::MatrixXd car_structure(const GridGeometry& geom, double alpha) {
  Eigen::MatrixXd q = -alpha * geom.adjacency;
  q.diagonal() += geom.neighbor_counts;
  return q;
}

namespace {

// Exact factor of the Matern covariance, jittered only when round-off makes
// the plain factorisation fail.
Eigen::LLT<Eigen::MatrixXd> factor_matern(const Matern& f, const GridGeometry& geom, const std::string& what) {
  Eigen::MatrixXd k = matern_raw(geom, f.variance, f.range);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().allFinite()) return llt;
  k.diagonal().array() += kMaternJitter * f.variance;
  return detail::factor_spd(k, what);
}

}  // namespace

Eigen::MatrixXd matern_correlation(const GridGeometry& geom, double range) {
  Eigen::MatrixXd r = matern_raw(geom, 1.0, range);
  r.diagonal().array() += kMaternJitter;
  return r;
}

Eigen::MatrixXd covariance_matrix(const CovarianceFamily& family, const GridGeometry& geom) {
  validate(family);
  const Index d = geom.size();
  return std::visit(
      Overloaded{
          [&](const Diagonal& f) -> Eigen::MatrixXd {
            return f.variance * Eigen::MatrixXd::Identity(d, d);
          },
          [&](const Matern& f) -> Eigen::MatrixXd {
            require_distinct_sites(geom);
            Eigen::MatrixXd k = matern_raw(geom, f.variance, f.range);
            Eigen::MatrixXd jittered = k;
            jittered.diagonal().array() += kMaternJitter * f.variance;
            detail::factor_spd(jittered, describe(family) + " covariance");
            return 0.5 * (k + k.transpose());
          },
          [&](const Wcar& f) -> Eigen::MatrixXd {
            require_car_graph(geom);
            const auto llt = detail::factor_spd(car_structure(geom, f.alpha), describe(family) + " precision");
            return f.tau2 * detail::inverse_spd(llt);
          },
      },
      family);
}

Eigen::MatrixXd precision_matrix(const CovarianceFamily& family, const GridGeometry& geom) {
  validate(family);
  const Index d = geom.size();
  return std::visit(
      Overloaded{
          [&](const Diagonal& f) -> Eigen::MatrixXd {
            return Eigen::MatrixXd::Identity(d, d) / f.variance;
          },
          [&](const Matern& f) -> Eigen::MatrixXd {
            require_distinct_sites(geom);
            return detail::inverse_spd(factor_matern(f, geom, describe(family) + " covariance"));
          },
          [&](const Wcar& f) -> Eigen::MatrixXd {
            require_car_graph(geom);
            return car_structure(geom, f.alpha) / f.tau2;
          },
      },
      family);
}

double log_det_precision(const CovarianceFamily& family, const GridGeometry& geom) {
  validate(family);
  const double d = static_cast<double>(geom.size());
  return std::visit(
      Overloaded{
          [&](const Diagonal& f) { return -d * std::log(f.variance); },
          [&](const Matern& f) {
            require_distinct_sites(geom);
            return -detail::log_det(factor_matern(f, geom, describe(family) + " covariance"));
          },
          [&](const Wcar& f) {
            require_car_graph(geom);
            const auto llt =
                detail::factor_spd(car_structure(geom, f.alpha), describe(family) + " precision");
            return -d * std::log(f.tau2) + detail::log_det(llt);
          },
      },
      family);
}

Eigen::VectorXd sample_coefficients(const CovarianceFamily& family, const GridGeometry& geom,
                                    std::uint64_t seed) {
  validate(family);
  detail::Engine rng(seed);
  const Eigen::VectorXd z = detail::standard_normal(rng, geom.size());
  return std::visit(
      Overloaded{
          [&](const Diagonal& f) -> Eigen::VectorXd { return std::sqrt(f.variance) * z; },
          [&](const Matern& f) -> Eigen::VectorXd {
            require_distinct_sites(geom);
            Eigen::MatrixXd k = matern_correlation(geom, f.range) * f.variance;
            const auto llt = detail::factor_spd(k, describe(family) + " covariance");
            return llt.matrixL() * z;
          },
          [&](const Wcar& f) -> Eigen::VectorXd {
            require_car_graph(geom);
            // Q = L L^T  =>  L^{-T} z ~ N(0, Q^{-1})
            const auto llt = detail::factor_spd(car_structure(geom, f.alpha) / f.tau2,
                                                describe(family) + " precision");
            return llt.matrixU().solve(z);
          },
      },
      family);
}

}  // namespace ridgeem
