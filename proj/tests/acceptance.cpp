// Acceptance suite: one PASS/FAIL line per check, non-zero exit on any FAIL.

#include "ridgeem/bench.hpp"
#include "ridgeem/covariance.hpp"
#include "ridgeem/em.hpp"
#include "ridgeem/io.hpp"
#include "ridgeem/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

using namespace ridgeem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

using Filter = std::function<bool(const ReplicateRecord&)>;

double median_of(const std::vector<ReplicateRecord>& recs, double ReplicateRecord::*field, const Filter& keep) {
  std::vector<double> v;
  for (const auto& r : recs)
    if (keep(r) && r.status.rfind("failed", 0) != 0) v.push_back(r.*field);
  return median(v);
}

int count_failed(const std::vector<ReplicateRecord>& recs) {
  return static_cast<int>(std::count_if(recs.begin(), recs.end(),
                                        [](const auto& r) { return r.status.rfind("failed", 0) == 0; }));
}

ExperimentDesign design(ExperimentKind kind) {
  ExperimentDesign d;
  d.kind = kind;
  d.replicates = 20;
  d.base_seed = 1;
  d.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  d.record_timing = true;
  return d;
}

ExperimentReport timed_run(const ExperimentDesign& d, const std::string& file) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport rep = run_experiment(d);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "  ran " << to_string(d.kind) << ": " << rep.records.size() << " records in " << fmt(s)
            << " s" << std::endl;
  std::ofstream out(file);
  write_records_csv(rep, true, out);
  return rep;
}

double in_fit_seconds(const std::vector<ReplicateRecord>& recs, const Filter& keep) {
  double ms = 0;
  for (const auto& r : recs)
    if (keep(r)) ms += r.wall_ms;
  return ms / 1000;
}

Eigen::MatrixXd gaussian(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd m(r, c);
  for (Index i = 0; i < m.size(); ++i) m(i) = z(rng);
  return m;
}

CovarianceFamily small_family(FamilyKind k) {
  if (k == FamilyKind::matern) return Matern{1.0, 1.5};
  if (k == FamilyKind::wcar) return Wcar{1.0, 0.8};
  return Diagonal{1.0};
}

const FamilyKind kAll[] = {FamilyKind::diagonal, FamilyKind::matern, FamilyKind::wcar};

// Each property returns an empty string on success, otherwise a description.
std::string prop_em_monotone() {
  int checked = 0;
  for (FamilyKind k : kAll)
    for (std::uint64_t s = 0; s < 50; ++s) {
      std::mt19937_64 rng(90000 + 100 * static_cast<int>(k) + s);
      const int side = 2 + static_cast<int>(rng() % 5);
      const Index n = 10 + static_cast<Index>(rng() % 91);
      const GridGeometry g = build_grid_geometry(side, side);
      const Eigen::VectorXd beta = sample_coefficients(small_family(k), g, s);
      const Eigen::MatrixXd X = gaussian(n, g.size(), rng);
      const Eigen::VectorXd y = X * beta + gaussian(n, 1, rng).col(0);
      EmConfig cfg;
      cfg.max_iter = 60;
      const auto fit = em_fit(make_dataset(y, X, true), k, k == FamilyKind::diagonal ? nullptr : &g, cfg);
      for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t)
        if (fit.loglik_trace[t] < fit.loglik_trace[t - 1] - 1e-8)
          return std::string(to_string(k)) + " seed " + std::to_string(s) + " decreased at step " +
                 std::to_string(t);
      ++checked;
    }
  return checked == 150 ? "" : "incomplete";
}

std::string prop_stationarity() {
  double worst = 0;
  for (FamilyKind k : kAll)
    for (std::uint64_t s = 0; s < 5; ++s) {
      std::mt19937_64 rng(700 + s);
      const GridGeometry g = build_grid_geometry(4, 5);
      const Eigen::MatrixXd X = gaussian(50, 20, rng);
      const Eigen::VectorXd y = X * sample_coefficients(small_family(k), g, s) + gaussian(50, 1, rng).col(0);
      const Dataset data = make_dataset(y, X, true);
      const GridGeometry* gp = k == FamilyKind::diagonal ? nullptr : &g;
      const auto fit = em_fit(data, k, gp);
      worst = std::max(worst, generalized_ridge_gradient(data, fit.params, gp, fit.posterior.mu).cwiseAbs().maxCoeff());
    }
  return worst <= 1e-6 ? "" : "max gradient " + fmt(worst);
}

std::string prop_cov_times_precision() {
  double worst = 0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (auto [r, c] : {std::pair{1, 2}, {3, 3}, {5, 5}, {7, 7}}) {
    const GridGeometry g = build_grid_geometry(r, c);
    for (int t = 0; t < 10; ++t)
      for (const CovarianceFamily& f : {CovarianceFamily{Diagonal{5 * u(rng)}},
                                        CovarianceFamily{Matern{5 * u(rng), 3 * u(rng)}},
                                        CovarianceFamily{Wcar{2 * u(rng), 1.9 * u(rng) - 0.95}}}) {
        const Eigen::MatrixXd e = precision_matrix(f, g) * covariance_matrix(f, g) -
                                  Eigen::MatrixXd::Identity(g.size(), g.size());
        worst = std::max(worst, e.cwiseAbs().maxCoeff());
      }
  }
  return worst <= 1e-8 ? "" : "max deviation " + fmt(worst);
}

std::string prop_fused_ridge() {
  std::mt19937_64 rng(6);
  for (auto [r, c] : {std::pair{1, 2}, {3, 4}, {7, 7}}) {
    const GridGeometry g = build_grid_geometry(r, c);
    for (int t = 0; t < 20; ++t) {
      const Eigen::VectorXd b = gaussian(g.size(), 1, rng).col(0);
      const double quad = b.dot(car_structure(g, 1.0) * b);
      double pairs = 0;
      for (Index i = 0; i < g.size(); ++i)
        for (Index j = 0; j < g.size(); ++j)
          if (g.adjacency(i, j) == 1.0) pairs += (b(i) - b(j)) * (b(i) - b(j));
      if (std::abs(quad - 0.5 * pairs) > 1e-10 * (1 + pairs)) return "mismatch at d=" + std::to_string(g.size());
    }
  }
  return "";
}

std::string prop_woodbury() {
  double worst = 0;
  std::mt19937_64 rng(7);
  for (auto [n, r, c] : {std::tuple{20, 1, 5}, std::tuple{5, 4, 5}})
    for (FamilyKind k : kAll)
      for (int t = 0; t < 10; ++t) {
        const GridGeometry g = build_grid_geometry(r, c);
        const Dataset data = make_dataset(gaussian(n, 1, rng).col(0), gaussian(n, g.size(), rng), false);
        const ModelParams p{0.3 + 0.2 * t, small_family(k), {}};
        const GridGeometry* gp = k == FamilyKind::diagonal ? nullptr : &g;
        worst = std::max(worst, std::abs(marginal_log_likelihood(data, p, gp, LikelihoodRoute::woodbury) -
                                         marginal_log_likelihood(data, p, gp, LikelihoodRoute::dense)));
      }
  return worst <= 1e-8 ? "" : "max difference " + fmt(worst);
}

std::string prop_zero_mean_reduction() {
  for (FamilyKind k : kAll) {
    std::mt19937_64 rng(8);
    const GridGeometry g = build_grid_geometry(4, 4);
    const Eigen::MatrixXd X = gaussian(50, 16, rng);
    const Eigen::VectorXd y = X * sample_coefficients(small_family(k), g, 8) + gaussian(50, 1, rng).col(0);
    const Dataset data = make_dataset(y, X, true);
    const GridGeometry* gp = k == FamilyKind::diagonal ? nullptr : &g;
    EmConfig a;
    a.max_iter = 30;
    EmConfig b = a;
    b.mean_mode = MeanMode::fixed_constant;
    b.mean_level = 0.0;
    const auto fa = em_fit(data, k, gp, a);
    const auto fb = em_fit(data, k, gp, b);
    const bool same = fa.loglik_trace.size() == fb.loglik_trace.size() &&
                      std::memcmp(fa.loglik_trace.data(), fb.loglik_trace.data(),
                                  fa.loglik_trace.size() * sizeof(double)) == 0 &&
                      std::memcmp(fa.posterior.mu.data(), fb.posterior.mu.data(), 16 * sizeof(double)) == 0 &&
                      std::memcmp(fa.posterior.cov.data(), fb.posterior.cov.data(), 256 * sizeof(double)) == 0 &&
                      fa.params.sigma2 == fb.params.sigma2;
    if (!same) return std::string(to_string(k)) + " differs";
  }
  return "";
}

std::string prop_car_profile_vs_joint() {
  double worst = 0;
  std::mt19937_64 rng(9);
  const GridGeometry g = build_grid_geometry(5, 5);
  for (int t = 0; t < 5; ++t) {
    const Eigen::MatrixXd B = gaussian(25, 30, rng);
    const Eigen::MatrixXd M = B * B.transpose() / 30 + covariance_matrix(Wcar{1.0, 0.9}, g);
    const auto prof = std::get<Wcar>(fit_wcar_moment(M, g, Wcar{1.0, 0.0}).family);
    auto neg = [&](const Eigen::VectorXd& x) {
      const double tau2 = std::exp(x(0));
      const Eigen::MatrixXd Q = car_structure(g, x(1));
      const Eigen::LLT<Eigen::MatrixXd> llt(Q);
      return -(2 * llt.matrixLLT().diagonal().array().log().sum() - 25 * x(0) - Q.cwiseProduct(M).sum() / tau2);
    };
    OptOptions o;
    o.max_iter = 500;
    o.tol = 1e-10;
    const auto r = minimize_bounded({neg, {}, Eigen::Vector2d(-10, -1 + 1e-4), Eigen::Vector2d(10, 1 - 1e-4),
                                     Eigen::Vector2d(0.5, 0.0)},
                                    o);
    worst = std::max({worst, std::abs(std::exp(r.x_opt(0)) - prof.tau2) / std::max(1.0, prof.tau2),
                      std::abs(r.x_opt(1) - prof.alpha)});
  }
  return worst <= 1e-4 ? "" : "max difference " + fmt(worst);
}

std::string prop_wcar_gradient() {
  double worst = 0;
  std::mt19937_64 rng(10);
  const GridGeometry g = build_grid_geometry(6, 5);
  const Eigen::MatrixXd B = gaussian(30, 40, rng);
  const Eigen::MatrixXd M = B * B.transpose() / 40;
  for (double a : {-0.8, -0.2, 0.0, 0.5, 0.95}) {
    const double an = wcar_profile_gradient(M, g, a);
    const double fd = finite_diff_gradient([&](const Eigen::VectorXd& x) { return wcar_profile_objective(M, g, x(0)); },
                                           Eigen::VectorXd::Constant(1, a))(0);
    worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
  }
  return worst <= 1e-4 ? "" : "max relative difference " + fmt(worst);
}

// Minimises and checks the box on every accepted iterate.
std::string optimizer_case(const std::string& name, const BoundedProblem& p, const Eigen::VectorXd& expected,
                           double tol, int max_iter) {
  bool feasible = true;
  int iterates = 0;
  OptOptions o;
  o.max_iter = max_iter;
  o.on_iterate = [&](const Eigen::VectorXd& x, double) {
    ++iterates;
    feasible = feasible && (x.array() >= p.lower.array()).all() && (x.array() <= p.upper.array()).all();
  };
  const auto r = minimize_bounded(p, o);
  const double err = (r.x_opt - expected).cwiseAbs().maxCoeff();
  if (!feasible) return name + " left the box";
  if (err > tol) return name + " error " + fmt(err);
  if (r.f_opt > p.objective(p.x0) + 1e-12) return name + " increased the objective";
  return iterates > 0 ? "" : name + " reported no iterates";
}

}  // namespace

int main() {
  std::cout << "ridgeem acceptance suite (20 replicates per cell)" << std::endl;

  // Simulation studies ----------------------------------------------------------
  auto nd = design(ExperimentKind::nrmse_vs_n);
  nd.n_values = {50, 200, 800};
  const auto nrmse = timed_run(nd, "acceptance_nrmse_vs_n.csv");

  auto at = [](const std::string& fam, Index n) {
    return Filter([fam, n](const ReplicateRecord& r) { return r.family_true == fam && r.n == n; });
  };
  const auto& R = nrmse.records;

  {
    const double s2 = median_of(R, &ReplicateRecord::sigma2_hat, at("diagonal", 800));
    const double sb = median_of(R, &ReplicateRecord::sigma_beta2_hat, at("diagonal", 800));
    const double secs = in_fit_seconds(R, at("diagonal", 800));
    report(1, "diagonal recovery (n=800, d=225)", s2 >= 30.6 && s2 <= 41.4 && sb >= 4.9 && sb <= 9.1,
           "median sigma2_hat=" + fmt(s2) + " in [30.6, 41.4], median sigma_beta2_hat=" + fmt(sb) +
               " in [4.9, 9.1], fit time " + fmt(secs) + " s");
  }
  {
    const double s2 = median_of(R, &ReplicateRecord::sigma2_hat, at("matern", 800));
    const double phi = median_of(R, &ReplicateRecord::phi_hat, at("matern", 800));
    const double secs = in_fit_seconds(R, at("matern", 800));
    report(2, "Matern recovery (n=800, d=225)",
           std::abs(s2 - 36) <= 0.15 * 36 && phi >= 2.0 && phi <= 8.0,
           "median sigma2_hat=" + fmt(s2) + " in [30.6, 41.4], median phi_hat=" + fmt(phi) +
               " in [2, 8], fit time " + fmt(secs) + " s");
  }
  {
    const double s2 = median_of(R, &ReplicateRecord::sigma2_hat, at("wcar", 800));
    const double a = median_of(R, &ReplicateRecord::alpha_hat, at("wcar", 800));
    const double secs = in_fit_seconds(R, at("wcar", 800));
    report(3, "WCAR recovery (n=800, d=225)", std::abs(s2 - 36) <= 0.15 * 36 && a >= 0.75 && a <= 0.99,
           "median sigma2_hat=" + fmt(s2) + " in [30.6, 41.4], median alpha_hat=" + fmt(a) +
               " in [0.75, 0.99], fit time " + fmt(secs) + " s");
  }
  {
    bool ok = count_failed(R) == 0;
    std::string detail;
    for (const char* fam : {"diagonal", "matern", "wcar"}) {
      double pb = INFINITY, py = INFINITY;
      detail += std::string(detail.empty() ? "" : "; ") + fam + " beta/y:";
      for (Index n : {50, 200, 800}) {
        const double b = median_of(R, &ReplicateRecord::nrmse_beta, at(fam, n));
        const double y = median_of(R, &ReplicateRecord::nrmse_y, at(fam, n));
        ok = ok && b <= pb && y <= py;
        pb = b;
        py = y;
        detail += " " + fmt(b) + "/" + fmt(y);
      }
    }
    report(4, "NRMSE non-increasing over n = 50, 200, 800", ok, detail);
  }

  {
    // The Matern-truth data of nrmse_vs_n at n = 800 are the misspecification
    // data (same generator, same seeds), so the correctly specified fits are reused.
    auto md = design(ExperimentKind::misspecification);
    md.families = {FamilyKind::diagonal, FamilyKind::wcar};
    const auto mis = timed_run(md, "acceptance_misspecification.csv");
    auto fit = [&](const std::string& f) {
      return Filter([f](const ReplicateRecord& r) { return r.family_fit == f; });
    };
    const double b_mat = median_of(R, &ReplicateRecord::nrmse_beta, at("matern", 800));
    const double y_mat = median_of(R, &ReplicateRecord::nrmse_y, at("matern", 800));
    const double b_car = median_of(mis.records, &ReplicateRecord::nrmse_beta, fit("wcar"));
    const double y_car = median_of(mis.records, &ReplicateRecord::nrmse_y, fit("wcar"));
    const double b_diag = median_of(mis.records, &ReplicateRecord::nrmse_beta, fit("diagonal"));
    const double y_diag = median_of(mis.records, &ReplicateRecord::nrmse_y, fit("diagonal"));
    const double gap = std::max({y_mat, y_car, y_diag}) - std::min({y_mat, y_car, y_diag});
    const bool ok = count_failed(mis.records) == 0 && b_mat < b_diag && b_car < b_diag &&
                    b_mat <= b_car + 0.05 && gap <= 0.1;
    report(5, "misspecification ordering (Matern truth)", ok,
           "median NRMSE_beta matern=" + fmt(b_mat) + " car=" + fmt(b_car) + " diagonal=" + fmt(b_diag) +
               "; NRMSE_y gap=" + fmt(gap) + " (<= 0.1)");
  }

  {
    std::string detail;
    bool ok = true;
    for (auto kind : {ExperimentKind::em_vs_cv_gaussian, ExperimentKind::em_vs_cv_uniform}) {
      const auto rep = timed_run(design(kind), "acceptance_" + std::string(to_string(kind)) + ".csv");
      const double em = median_of(rep.records, &ReplicateRecord::nrmse_beta,
                                  [](const ReplicateRecord& r) { return r.method == "em"; });
      const double cv = median_of(rep.records, &ReplicateRecord::nrmse_beta,
                                  [](const ReplicateRecord& r) { return r.method == "cv"; });
      ok = ok && count_failed(rep.records) == 0 && em <= cv;
      detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(kind)) + " em=" + fmt(em) +
                " cv=" + fmt(cv);
    }
    report(6, "EM vs 10-fold CV ridge (median NRMSE_beta)", ok, detail);
  }

  // Property suites -------------------------------------------------------------
  {
    const std::vector<std::pair<std::string, std::function<std::string()>>> props{
        {"EM monotone likelihood (150 instances)", prop_em_monotone},
        {"generalized ridge stationarity", prop_stationarity},
        {"covariance x precision = I", prop_cov_times_precision},
        {"fused ridge quadratic form", prop_fused_ridge},
        {"Woodbury vs n x n likelihood", prop_woodbury},
        {"zero-mean reduction bit-exact", prop_zero_mean_reduction},
        {"CAR profile vs joint optimisation", prop_car_profile_vs_joint},
        {"WCAR analytic vs finite-difference gradient", prop_wcar_gradient},
    };
    std::string bad;
    for (const auto& [name, fn] : props) {
      std::string r;
      try {
        r = fn();
      } catch (const std::exception& e) {
        r = std::string("threw: ") + e.what();
      }
      std::cout << "  " << (r.empty() ? "ok   " : "FAIL ") << name << (r.empty() ? "" : ": " + r) << std::endl;
      if (!r.empty()) bad += (bad.empty() ? "" : "; ") + name;
    }
    report(7, "property suites", bad.empty(), bad.empty() ? "8 of 8 hold" : "failing: " + bad);
  }

  {
    auto quad = [](const Eigen::VectorXd& x) { return (x(0) - 3) * (x(0) - 3); };
    auto rosen = [](const Eigen::VectorXd& x) {
      return (1 - x(0)) * (1 - x(0)) + 100 * (x(1) - x(0) * x(0)) * (x(1) - x(0) * x(0));
    };
    const Eigen::VectorXd one = Eigen::VectorXd::Constant(1, 0.0);
    std::string bad;
    for (const auto& r :
         {optimizer_case("interior quadratic", {quad, {}, one, Eigen::VectorXd::Constant(1, 10.0), one},
                         Eigen::VectorXd::Constant(1, 3.0), 1e-6, 100),
          optimizer_case("bound-active quadratic", {quad, {}, one, Eigen::VectorXd::Constant(1, 2.0), one},
                         Eigen::VectorXd::Constant(1, 2.0), 1e-6, 100),
          optimizer_case("Rosenbrock", {rosen, {}, Eigen::Vector2d(-5, -5), Eigen::Vector2d(5, 5), Eigen::Vector2d(-1.2, 1)},
                         Eigen::Vector2d(1, 1), 1e-4, 500)})
      if (!r.empty()) bad += (bad.empty() ? "" : "; ") + r;
    report(8, "bounded L-BFGS examples with per-iterate feasibility", bad.empty(),
           bad.empty() ? "3 of 3 within tolerance, every iterate inside the box" : bad);
  }

  std::cout << (failures == 0 ? "all acceptance checks passed" : std::to_string(failures) + " check(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
