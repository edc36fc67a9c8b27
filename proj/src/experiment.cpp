#include "ridgeem/bench.hpp"
#include "ridgeem/io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace ridgeem {

namespace {

constexpr double kNa = std::numeric_limits<double>::quiet_NaN();

enum class Method { em, mle, cv };

std::string_view to_string(Method m) {
  switch (m) {
    case Method::em:
      return "em";
    case Method::mle:
      return "mle";
    case Method::cv:
      return "cv";
  }
  return "?";
}

struct FitSpec {
  Method method;
  FamilyKind family;
};

struct Scenario {
  Index n;
  int side;
  double sigma2;
  FamilyKind family_true;
  CovarianceFamily beta_family;
  NoiseModel noise;
  std::vector<FitSpec> fits;
};

template <class T>
std::vector<T> or_default(const std::vector<T>& given, std::vector<T> fallback) {
  return given.empty() ? fallback : given;
}

std::vector<Scenario> build_scenarios(const ExperimentDesign& design) {
  const std::vector<FamilyKind> all_families{FamilyKind::diagonal, FamilyKind::matern,
                                             FamilyKind::wcar};
  std::vector<Scenario> out;
  switch (design.kind) {
    case ExperimentKind::nrmse_vs_n: {
      const auto ns = or_default<Index>(design.n_values, {50, 200, 400, 800});
      const auto side = or_default<int>(design.grid_sides, {15}).front();
      const auto s2 = or_default<double>(design.sigma2_values, {36.0}).front();
      for (FamilyKind f : or_default(design.families, all_families))
        for (Index n : ns)
          out.push_back({n, side, s2, f, reference_family(f), {}, {{Method::em, f}}});
      break;
    }
    case ExperimentKind::params_vs_n_d_sigma: {
      const auto ns = or_default<Index>(design.n_values, {50, 200, 400, 800});
      const auto sides = or_default<int>(design.grid_sides, {5, 10, 15});
      const auto s2s = or_default<double>(design.sigma2_values, {9.0, 36.0, 100.0, 225.0});
      for (FamilyKind f : or_default(design.families, all_families)) {
        std::vector<std::tuple<Index, int, double>> cells;
        for (Index n : ns) cells.emplace_back(n, 15, 36.0);
        for (int s : sides) cells.emplace_back(800, s, 36.0);
        for (double v : s2s) cells.emplace_back(800, 15, v);
        std::vector<std::tuple<Index, int, double>> unique;
        for (const auto& c : cells)
          if (std::find(unique.begin(), unique.end(), c) == unique.end()) unique.push_back(c);
        for (const auto& [n, s, v] : unique)
          out.push_back({n, s, v, f, reference_family(f), {}, {{Method::em, f}, {Method::mle, f}}});
      }
      break;
    }
    case ExperimentKind::misspecification: {
      const auto ns = or_default<Index>(design.n_values, {800});
      const auto side = or_default<int>(design.grid_sides, {15}).front();
      const auto s2 = or_default<double>(design.sigma2_values, {36.0}).front();
      std::vector<FitSpec> fits;
      for (FamilyKind f : or_default(design.families, all_families)) fits.push_back({Method::em, f});
      for (Index n : ns)
        out.push_back({n, side, s2, FamilyKind::matern, reference_family(FamilyKind::matern), {}, fits});
      break;
    }
    case ExperimentKind::em_vs_cv_gaussian:
    case ExperimentKind::em_vs_cv_uniform: {
      const auto ns = or_default<Index>(design.n_values, {800});
      const auto side = or_default<int>(design.grid_sides, {15}).front();
      const auto s2 = or_default<double>(design.sigma2_values, {36.0}).front();
      NoiseModel noise;
      if (design.kind == ExperimentKind::em_vs_cv_uniform) noise = {NoiseKind::uniform, 2.0, 30.0};
      for (Index n : ns)
        out.push_back({n, side, s2, FamilyKind::diagonal, reference_family(FamilyKind::diagonal), noise,
                       {{Method::em, FamilyKind::diagonal}, {Method::cv, FamilyKind::diagonal}}});
      break;
    }
  }
  return out;
}

void fill_theta(ReplicateRecord& rec, const ModelParams& p) {
  rec.sigma2_hat = p.sigma2;
  if (const auto* f = std::get_if<Diagonal>(&p.family)) rec.sigma_beta2_hat = f->variance;
  if (const auto* f = std::get_if<Matern>(&p.family)) {
    rec.sigma_beta2_hat = f->variance;
    rec.phi_hat = f->range;
  }
  if (const auto* f = std::get_if<Wcar>(&p.family)) {
    rec.tau2_hat = f->tau2;
    rec.alpha_hat = f->alpha;
  }
}

std::vector<ReplicateRecord> run_task(const ExperimentDesign& design, const Scenario& sc,
                                      std::uint64_t seed) {
  using Clock = std::chrono::steady_clock;
  SimConfig cfg;
  cfg.rows = cfg.cols = sc.side;
  cfg.n = sc.n;
  cfg.beta_family = sc.beta_family;
  cfg.sigma2 = sc.sigma2;
  cfg.noise = sc.noise;
  cfg.seed = seed;

  auto blank = [&](const FitSpec& fs) {
    ReplicateRecord rec;
    rec.experiment = std::string(to_string(design.kind));
    rec.n = sc.n;
    rec.d = static_cast<Index>(sc.side) * sc.side;
    rec.sigma2 = sc.noise.kind == NoiseKind::uniform
                     ? (sc.noise.upper - sc.noise.lower) * (sc.noise.upper - sc.noise.lower) / 12.0
                     : sc.sigma2;
    rec.family_true = std::string(to_string(sc.family_true));
    rec.family_fit = fs.method == Method::cv ? "ridge" : std::string(to_string(fs.family));
    rec.method = std::string(to_string(fs.method));
    rec.seed = seed;
    rec.sigma2_hat = rec.sigma_beta2_hat = rec.phi_hat = rec.tau2_hat = rec.alpha_hat =
        rec.lambda_hat = rec.nrmse_beta = rec.nrmse_y = rec.wall_ms = kNa;
    return rec;
  };

  std::vector<ReplicateRecord> out;
  SimulatedData sim;
  Dataset train;
  try {
    sim = simulate_dataset(cfg);
    train = make_dataset(sim.train.y, sim.train.X, true);
  } catch (const std::exception& e) {
    for (const auto& fs : sc.fits) {
      ReplicateRecord rec = blank(fs);
      rec.status = std::string("failed: ") + e.what();
      out.push_back(std::move(rec));
    }
    return out;
  }

  for (const auto& fs : sc.fits) {
    ReplicateRecord rec = blank(fs);
    const auto t0 = Clock::now();
    try {
      const GridGeometry* geom = fs.family == FamilyKind::diagonal ? nullptr : &sim.geom;
      Eigen::VectorXd beta_hat;
      switch (fs.method) {
        case Method::em: {
          const FitResult fit = em_fit(train, fs.family, geom, design.em);
          fill_theta(rec, fit.params);
          rec.iterations = fit.iterations;
          beta_hat = fit.posterior.mu;
          rec.status = fit.converged ? "ok" : std::string(to_string(fit.stop_reason));
          break;
        }
        case Method::mle: {
          MStepOptions mo;
          mo.phi_min = design.em.phi_min;
          mo.phi_max = design.em.phi_max;
          mo.alpha_eps = design.em.alpha_eps;
          mo.inner = design.em.inner;
          const ModelParams p = mle_oracle(train, sim.true_beta, fs.family, geom, mo);
          fill_theta(rec, p);
          beta_hat = e_step(train, p, geom).mu;
          rec.status = "ok";
          break;
        }
        case Method::cv: {
          const auto grid = design.lambda_grid.empty() ? default_lambda_grid() : design.lambda_grid;
          const CvResult cv = cv_ridge_baseline(train, design.cv_folds, grid, seed ^ 0xc0ffeeULL);
          rec.lambda_hat = cv.lambda;
          beta_hat = cv.beta;
          rec.status = "ok";
          break;
        }
      }
      rec.nrmse_beta = nrmse_beta(sim.true_beta, beta_hat);
      rec.nrmse_y = nrmse_y(sim.test.y, predict_response(sim.test.X, train, beta_hat));
    } catch (const std::exception& e) {
      rec.status = std::string("failed: ") + e.what();
    }
    if (design.record_timing)
      rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    out.push_back(std::move(rec));
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ' ';
    if constexpr (std::is_floating_point_v<T>)
      os << format_number(v[i]);
    else if constexpr (std::is_same_v<T, FamilyKind>)
      os << to_string(v[i]);
    else
      os << v[i];
  }
  return os.str();
}

const std::vector<std::pair<std::string, double ReplicateRecord::*>> kMetricFields{
    {"nrmse_beta", &ReplicateRecord::nrmse_beta},
    {"nrmse_y", &ReplicateRecord::nrmse_y},
    {"sigma2_hat", &ReplicateRecord::sigma2_hat},
    {"sigma_beta2_hat", &ReplicateRecord::sigma_beta2_hat},
    {"phi_hat", &ReplicateRecord::phi_hat},
    {"tau2_hat", &ReplicateRecord::tau2_hat},
    {"alpha_hat", &ReplicateRecord::alpha_hat},
    {"lambda_hat", &ReplicateRecord::lambda_hat},
};

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::nrmse_vs_n:
      return "nrmse_vs_n";
    case ExperimentKind::params_vs_n_d_sigma:
      return "params_vs_n_d_sigma";
    case ExperimentKind::misspecification:
      return "misspecification";
    case ExperimentKind::em_vs_cv_gaussian:
      return "em_vs_cv_gaussian";
    case ExperimentKind::em_vs_cv_uniform:
      return "em_vs_cv_uniform";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (auto k : {ExperimentKind::nrmse_vs_n, ExperimentKind::params_vs_n_d_sigma,
                 ExperimentKind::misspecification, ExperimentKind::em_vs_cv_gaussian,
                 ExperimentKind::em_vs_cv_uniform})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown experiment '" + std::string(name) + "'");
}

CovarianceFamily reference_family(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::diagonal:
      return Diagonal{7.0};
    case FamilyKind::matern:
      return Matern{0.1, 4.0};
    case FamilyKind::wcar:
      return Wcar{1.0, 0.9};
  }
  return Diagonal{7.0};
}

Quartiles quartiles(std::vector<double> values) {
  std::erase_if(values, [](double v) { return std::isnan(v); });
  if (values.empty()) return {kNa, kNa, kNa};
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double h = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {q(0.25), q(0.5), q(0.75)};
}

std::vector<AggregateRow> aggregate(const std::vector<ReplicateRecord>& records) {
  std::vector<AggregateRow> rows;
  std::vector<std::vector<const ReplicateRecord*>> members;
  for (const auto& r : records) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& a) {
      return a.experiment == r.experiment && a.n == r.n && a.d == r.d && a.sigma2 == r.sigma2 &&
             a.family_true == r.family_true && a.family_fit == r.family_fit && a.method == r.method;
    });
    if (it == rows.end()) {
      AggregateRow a;
      a.experiment = r.experiment;
      a.n = r.n;
      a.d = r.d;
      a.sigma2 = r.sigma2;
      a.family_true = r.family_true;
      a.family_fit = r.family_fit;
      a.method = r.method;
      rows.push_back(std::move(a));
      members.emplace_back();
      it = rows.end() - 1;
    }
    const auto idx = static_cast<std::size_t>(it - rows.begin());
    if (r.status.rfind("failed", 0) == 0) {
      ++it->failed;
    } else {
      ++it->count;
      members[idx].push_back(&r);
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& [name, field] : kMetricFields) {
      std::vector<double> vals;
      for (const auto* r : members[i]) vals.push_back(r->*field);
      rows[i].metrics.emplace_back(name, quartiles(std::move(vals)));
    }
  return rows;
}

ExperimentReport run_experiment(const ExperimentDesign& design) {
  if (design.replicates < 1) throw std::invalid_argument("replicates must be at least 1");
  const std::vector<Scenario> scenarios = build_scenarios(design);

  ExperimentReport report;
  report.header = {
      {"experiment", std::string(to_string(design.kind))},
      {"replicates", std::to_string(design.replicates)},
      {"base_seed", std::to_string(design.base_seed)},
      {"n_values", join(design.n_values)},
      {"grid_sides", join(design.grid_sides)},
      {"sigma2_values", join(design.sigma2_values)},
      {"families", join(design.families)},
      {"x_covariance", "matern(variance=6, range=2, smoothness=1.5)"},
      {"test_fraction", "0.5"},
      {"cv_folds", std::to_string(design.cv_folds)},
      {"em_tol", format_number(design.em.tol)},
      {"em_max_iter", std::to_string(design.em.max_iter)},
      {"note", "empty lists mean the built-in defaults of the experiment"},
  };

  struct Task {
    std::size_t scenario;
    int replicate;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < scenarios.size(); ++s)
    for (int r = 0; r < design.replicates; ++r) tasks.push_back({s, r});

  std::vector<std::vector<ReplicateRecord>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const Task& task = tasks[t];
      results[t] = run_task(design, scenarios[task.scenario],
                            design.base_seed + static_cast<std::uint64_t>(task.replicate));
    }
  };
  const int threads = std::max(1, design.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  for (auto& chunk : results)
    for (auto& rec : chunk) report.records.push_back(std::move(rec));
  report.aggregates = aggregate(report.records);
  return report;
}

void write_records_csv(const ExperimentReport& report, bool timing, std::ostream& out) {
  for (const auto& [k, v] : report.header) out << "# " << k << " = " << v << '\n';
  out << "experiment,n,d,sigma2,family_true,family_fit,method,seed,sigma2_hat,sigma_beta2_hat,"
         "phi_hat,tau2_hat,alpha_hat,lambda_hat,nrmse_beta,nrmse_y,iterations,wall_ms,status\n";
  for (const auto& r : report.records) {
    out << r.experiment << ',' << r.n << ',' << r.d << ',' << format_number(r.sigma2) << ','
        << r.family_true << ',' << r.family_fit << ',' << r.method << ',' << r.seed << ','
        << format_number(r.sigma2_hat) << ',' << format_number(r.sigma_beta2_hat) << ','
        << format_number(r.phi_hat) << ',' << format_number(r.tau2_hat) << ','
        << format_number(r.alpha_hat) << ',' << format_number(r.lambda_hat) << ','
        << format_number(r.nrmse_beta) << ',' << format_number(r.nrmse_y) << ',' << r.iterations
        << ',' << (timing ? format_number(r.wall_ms) : std::string("NA")) << ','
        << csv_field(r.status) << '\n';
  }
}

void write_summary_csv(const ExperimentReport& report, std::ostream& out) {
  out << "experiment,n,d,sigma2,family_true,family_fit,method,count,failed";
  for (const auto& [name, field] : kMetricFields) {
    (void)field;
    out << ',' << name << "_q1," << name << "_median," << name << "_q3";
  }
  out << '\n';
  for (const auto& a : report.aggregates) {
    out << a.experiment << ',' << a.n << ',' << a.d << ',' << format_number(a.sigma2) << ','
        << a.family_true << ',' << a.family_fit << ',' << a.method << ',' << a.count << ','
        << a.failed;
    for (const auto& [name, q] : a.metrics)
      out << ',' << format_number(q.q1) << ',' << format_number(q.median) << ','
          << format_number(q.q3);
    out << '\n';
  }
}

}  // namespace ridgeem
