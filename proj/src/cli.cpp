#include "ridgeem/cli.hpp"

#include "ridgeem/bench.hpp"
#include "ridgeem/errors.hpp"
#include "ridgeem/io.hpp"
#include "ridgeem/kernels.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

namespace ridgeem {

namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeometryArgs {
  std::string grid;
  std::string coords;
  std::string edges;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--grid", grid, "Rook lattice given as ROWSxCOLS, e.g. 15x15");
    cmd->add_option("--coords", coords, "Site coordinate CSV (id,x,y)");
    cmd->add_option("--edges", edges, "Edge list CSV (i,j) referring to site ids");
  }

  std::optional<GridGeometry> load() const {
    if (!grid.empty() && !coords.empty()) throw UsageError("give either --grid or --coords, not both");
    if (!edges.empty() && coords.empty()) throw UsageError("--edges needs --coords");
    if (!grid.empty()) return parse_grid_spec(grid);
    if (!coords.empty())
      return load_geometry(coords, edges.empty() ? std::nullopt : std::optional<std::string>(edges));
    return std::nullopt;
  }
};

std::string single_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

json family_json(const CovarianceFamily& f) {
  json j;
  j["family"] = std::string(to_string(kind_of(f)));
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Diagonal>) {
          j["variance"] = v.variance;
        } else if constexpr (std::is_same_v<T, Matern>) {
          j["variance"] = v.variance;
          j["range"] = v.range;
          j["smoothness"] = Matern::smoothness;
        } else {
          j["tau2"] = v.tau2;
          j["alpha"] = v.alpha;
        }
      },
      f);
  return j;
}

std::string describe_family(const CovarianceFamily& f) {
  std::ostringstream os;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Diagonal>)
          os << "sigma_beta2=" << format_number(v.variance);
        else if constexpr (std::is_same_v<T, Matern>)
          os << "sigma_beta2=" << format_number(v.variance) << " phi=" << format_number(v.range);
        else
          os << "tau2=" << format_number(v.tau2) << " alpha=" << format_number(v.alpha);
      },
      f);
  return os.str();
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
}

// fit ------------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string family;
  std::string config;
  std::string out = "ridgeem";
  GeometryArgs geom;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<int> max_iter;
  bool no_center = false;
};

FileConfig resolve_config(const std::string& path, std::optional<double> tol,
                          std::optional<int> max_iter, std::optional<std::uint64_t> seed,
                          bool no_center) {
  FileConfig cfg = path.empty() ? FileConfig{} : load_config(path);
  if (tol) cfg.em.tol = *tol;
  if (max_iter) cfg.em.max_iter = *max_iter;
  if (seed) cfg.em.seed = *seed;
  if (no_center) cfg.em.center = false;
  if (!(cfg.em.tol > 0.0)) throw UsageError("--tol must be positive");
  if (cfg.em.max_iter < 1) throw UsageError("--max-iter must be at least 1");
  return cfg;
}

FamilyKind resolve_family(const std::string& flag, const FileConfig& cfg) {
  if (!flag.empty()) {
    try {
      return parse_family_kind(flag);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (cfg.family) return *cfg.family;
  throw UsageError("no family given (use --family or a config file)");
}

void require_geometry(FamilyKind kind, const std::optional<GridGeometry>& geom, Index d) {
  if (kind != FamilyKind::diagonal && !geom)
    throw UsageError("family " + std::string(to_string(kind)) +
                     " needs a geometry (--grid or --coords/--edges)");
  if (geom && geom->size() != d)
    throw UsageError("geometry has " + std::to_string(geom->size()) + " sites but the data has " +
                     std::to_string(d) + " predictors");
}

std::string run_fit(const FitArgs& a, std::ostream& out, bool verbose) {
  const FileConfig cfg = resolve_config(a.config, a.tol, a.max_iter, a.seed, a.no_center);
  const FamilyKind kind = resolve_family(a.family, cfg);
  const auto geom = a.geom.load();
  const Dataset data = load_dataset(a.data, cfg.em.center);
  require_geometry(kind, geom, data.d());
  const GridGeometry* gp = geom ? &*geom : nullptr;
  if (verbose)
    out << "loaded " << data.n() << " rows, " << data.d() << " predictors (kernels: "
        << kernels::isa_name(kernels::active().isa) << ")\n";

  const FitResult fit = em_fit(data, kind, gp, cfg.em);

  const Eigen::LLT<Eigen::MatrixXd> post(fit.posterior.cov);
  const double logdet_post_cov = 2.0 * post.matrixLLT().diagonal().array().log().sum();
  const double logdet_prior_prec =
      gp ? log_det_precision(fit.params.family, *gp)
         : -static_cast<double>(data.d()) * std::log(std::get<Diagonal>(fit.params.family).variance);
  const double loglik = fit.loglik_trace.back();

  std::ostringstream rep;
  rep << "family = " << to_string(kind) << '\n'
      << "n = " << data.n() << '\n'
      << "d = " << data.d() << '\n'
      << "centered = " << (data.centered ? "true" : "false") << '\n'
      << "sigma2 = " << format_number(fit.params.sigma2) << '\n';
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Diagonal>) {
          rep << "sigma_beta2 = " << format_number(v.variance) << '\n';
        } else if constexpr (std::is_same_v<T, Matern>) {
          rep << "sigma_beta2 = " << format_number(v.variance) << '\n'
              << "phi = " << format_number(v.range) << '\n'
              << "smoothness = 1.5\n";
        } else {
          rep << "tau2 = " << format_number(v.tau2) << '\n'
              << "alpha = " << format_number(v.alpha) << '\n';
        }
      },
      fit.params.family);
  if (fit.params.mean) rep << "mean_level = " << format_number((*fit.params.mean)(0)) << '\n';
  rep << "loglik = " << format_number(loglik) << '\n'
      << "logdet_prior_precision = " << format_number(logdet_prior_prec) << '\n'
      << "logdet_posterior_cov = " << format_number(logdet_post_cov) << '\n'
      << "iterations = " << fit.iterations << '\n'
      << "converged = " << (fit.converged ? "true" : "false") << '\n'
      << "stop_reason = " << to_string(fit.stop_reason) << '\n'
      << "sigma2_floored = " << (fit.sigma2_floored ? "true" : "false") << '\n';
  write_text(a.out + "_report.txt", rep.str());

  std::ostringstream trace;
  trace << "iteration,loglik\n";
  for (std::size_t t = 0; t < fit.loglik_trace.size(); ++t)
    trace << t << ',' << format_number(fit.loglik_trace[t]) << '\n';
  write_text(a.out + "_trace.csv", trace.str());

  write_beta_csv(a.out + "_beta.csv", gp, fit.posterior.mu);

  json model;
  model["params"] = family_json(fit.params.family);
  model["params"]["sigma2"] = fit.params.sigma2;
  model["centered"] = data.centered;
  model["y_mean"] = data.y_mean;
  model["x_mean"] = to_vec(data.centered ? data.x_mean : Eigen::VectorXd::Zero(data.d()).eval());
  model["beta_mean"] = to_vec(fit.posterior.mu);
  std::vector<double> cov(fit.posterior.cov.data(),
                          fit.posterior.cov.data() + fit.posterior.cov.size());
  model["beta_cov"] = cov;
  write_text(a.out + "_model.json", model.dump() + "\n");

  if (verbose) out << rep.str();
  return "status=ok command=fit family=" + std::string(to_string(kind)) +
         " iterations=" + std::to_string(fit.iterations) +
         " stop_reason=" + std::string(to_string(fit.stop_reason)) +
         " loglik=" + format_number(loglik) + " " + describe_family(fit.params.family) +
         " sigma2=" + format_number(fit.params.sigma2);
}

// predict ----------------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string design;
  std::string out = "predictions.csv";
};

std::string run_predict(const PredictArgs& a) {
  std::ifstream in(a.model);
  if (!in) throw DataError("cannot open '" + a.model + "'");
  json model;
  try {
    in >> model;
  } catch (const json::exception& e) {
    throw DataError(a.model + ": " + e.what());
  }
  FitResult fit;
  struct {
    bool centered = false;
    double y_mean = 0.0;
    Eigen::VectorXd x_mean;
  } train;
  try {
    fit.params.sigma2 = model.at("params").at("sigma2").get<double>();
    fit.posterior.mu = from_vec(model.at("beta_mean").get<std::vector<double>>());
    const auto cov = model.at("beta_cov").get<std::vector<double>>();
    const Index d = fit.posterior.mu.size();
    if (static_cast<Index>(cov.size()) != d * d) throw DataError(a.model + ": beta_cov has wrong size");
    fit.posterior.cov = Eigen::Map<const Eigen::MatrixXd>(cov.data(), d, d);
    train.centered = model.at("centered").get<bool>();
    train.y_mean = model.at("y_mean").get<double>();
    train.x_mean = from_vec(model.at("x_mean").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw DataError(a.model + ": " + e.what());
  }
  const Eigen::MatrixXd X = load_design(a.design);
  if (X.cols() != fit.posterior.mu.size())
    throw DataError(a.design + " has " + std::to_string(X.cols()) + " predictors, the model has " +
                    std::to_string(fit.posterior.mu.size()));
  if (train.centered && train.x_mean.size() != X.cols())
    throw DataError(a.model + ": x_mean has wrong size");
  const Eigen::MatrixXd Xm = train.centered ? (X.rowwise() - train.x_mean.transpose()).eval() : X;
  const Prediction p = posterior_predict(Xm, fit);
  std::ostringstream os;
  os << "row,mean,variance\n";
  for (Index i = 0; i < X.rows(); ++i)
    os << (i + 1) << ',' << format_number(p.mean(i) + (train.centered ? train.y_mean : 0.0)) << ','
       << format_number(p.variance(i)) << '\n';
  write_text(a.out, os.str());
  return "status=ok command=predict rows=" + std::to_string(X.rows());
}

// simulate ---------------------------------------------------------------------

struct SimulateArgs {
  std::string grid = "15x15";
  Index n = 800;
  std::string family = "diagonal";
  double sigma2 = 36.0;
  std::string noise = "gaussian";
  double test_fraction = 0.5;
  std::uint64_t seed = 1;
  std::string out = "sim";
};

std::string run_simulate(const SimulateArgs& a) {
  SimConfig cfg;
  const GridGeometry grid = parse_grid_spec(a.grid);
  cfg.rows = static_cast<int>(grid.coords.col(0).maxCoeff());
  cfg.cols = static_cast<int>(grid.coords.col(1).maxCoeff());
  cfg.n = a.n;
  try {
    cfg.beta_family = reference_family(parse_family_kind(a.family));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.sigma2 = a.sigma2;
  if (a.noise == "uniform")
    cfg.noise.kind = NoiseKind::uniform;
  else if (a.noise != "gaussian")
    throw UsageError("--noise must be gaussian or uniform");
  cfg.test_fraction = a.test_fraction;
  cfg.seed = a.seed;
  try {
    validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const SimulatedData sim = simulate_dataset(cfg);
  write_dataset(a.out + "_train.csv", sim.train);
  write_dataset(a.out + "_test.csv", sim.test);
  write_beta_csv(a.out + "_beta.csv", &sim.geom, sim.true_beta);
  write_coords_csv(a.out + "_coords.csv", sim.geom);
  write_edges_csv(a.out + "_edges.csv", sim.geom);
  return "status=ok command=simulate n=" + std::to_string(sim.train.n()) +
         " n_test=" + std::to_string(sim.test.n()) + " d=" + std::to_string(sim.train.d());
}

// benchmark --------------------------------------------------------------------

struct BenchmarkArgs {
  std::string experiment;
  int replicates = 20;
  std::uint64_t seed = 1;
  int threads = 1;
  bool timing = false;
  std::string config;
  std::vector<Index> n_values;
  std::vector<int> grid_sides;
  std::vector<double> sigma2_values;
  std::vector<std::string> families;
  int cv_folds = 10;
  std::string out = "benchmark";
};

std::string run_benchmark(const BenchmarkArgs& a) {
  ExperimentDesign design;
  try {
    design.kind = parse_experiment_kind(a.experiment);
    for (const auto& f : a.families) design.families.push_back(parse_family_kind(f));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.replicates < 1) throw UsageError("--replicates must be at least 1");
  if (a.cv_folds < 2) throw UsageError("--cv-folds must be at least 2");
  design.replicates = a.replicates;
  design.base_seed = a.seed;
  design.threads = std::max(1, a.threads);
  design.record_timing = a.timing;
  design.n_values = a.n_values;
  design.grid_sides = a.grid_sides;
  design.sigma2_values = a.sigma2_values;
  design.cv_folds = a.cv_folds;
  if (!a.config.empty()) design.em = load_config(a.config).em;
  design.em.center = true;

  const ExperimentReport report = run_experiment(design);
  {
    std::ofstream f(a.out + "_records.csv");
    if (!f) throw DataError("cannot open '" + a.out + "_records.csv' for writing");
    write_records_csv(report, a.timing, f);
  }
  {
    std::ofstream f(a.out + "_summary.csv");
    if (!f) throw DataError("cannot open '" + a.out + "_summary.csv' for writing");
    write_summary_csv(report, f);
  }
  int failed = 0;
  for (const auto& r : report.records) failed += r.status.rfind("failed", 0) == 0 ? 1 : 0;
  return "status=ok command=benchmark experiment=" + a.experiment +
         " records=" + std::to_string(report.records.size()) + " failed=" + std::to_string(failed);
}

// validate ---------------------------------------------------------------------

struct ValidateArgs {
  std::string data;
  std::string config;
  std::string family;
  GeometryArgs geom;
};

std::string run_validate(const ValidateArgs& a, std::ostream& out, bool verbose) {
  const FileConfig cfg = a.config.empty() ? FileConfig{} : load_config(a.config);
  std::optional<FamilyKind> kind;
  if (!a.family.empty() || cfg.family) kind = resolve_family(a.family, cfg);
  const auto geom = a.geom.load();
  std::string msg = "status=ok command=validate";
  if (geom) {
    msg += " sites=" + std::to_string(geom->size());
    if (kind == FamilyKind::wcar && geom->has_isolated_sites())
      throw DataError("the CAR prior needs every site to have a neighbour");
  }
  if (!a.data.empty()) {
    const Dataset data = load_dataset(a.data, cfg.em.center);
    if (kind) require_geometry(*kind, geom, data.d());
    if (geom && geom->size() != data.d())
      throw UsageError("geometry and data disagree on the number of sites");
    msg += " n=" + std::to_string(data.n()) + " d=" + std::to_string(data.d());
  } else if (kind && *kind != FamilyKind::diagonal && !geom) {
    throw UsageError("family " + std::string(to_string(*kind)) + " needs a geometry");
  }
  if (kind) msg += " family=" + std::string(to_string(*kind));
  if (verbose) out << "inputs are consistent\n";
  return msg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical generalized ridge regression fitted by EM", "ridgeem"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Print progress and the fit report");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the model to a CSV dataset");
  fit_cmd->add_option("--data", fit.data, "Dataset CSV with columns y,x_1..x_d")->required();
  fit_cmd->add_option("--family", fit.family, "diagonal, matern or wcar");
  fit_cmd->add_option("--config", fit.config, "key = value configuration file");
  fit_cmd->add_option("--out", fit.out, "Output prefix")->capture_default_str();
  fit.geom.add_to(fit_cmd);
  fit_cmd->add_option("--seed", fit.seed, "Seed override");
  fit_cmd->add_option("--tol", fit.tol, "Relative log-likelihood tolerance");
  fit_cmd->add_option("--max-iter", fit.max_iter, "EM iteration cap");
  fit_cmd->add_flag("--no-center", fit.no_center, "Do not centre y and the X columns");

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Predict from a fitted model");
  pred_cmd->add_option("--model", pred.model, "Model JSON written by fit")->required();
  pred_cmd->add_option("--design", pred.design, "CSV of predictor rows (a y column is ignored)")
      ->required();
  pred_cmd->add_option("--out", pred.out, "Output CSV (row,mean,variance)")->capture_default_str();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Draw a synthetic dataset");
  sim_cmd->add_option("--grid", sim.grid, "Grid ROWSxCOLS")->capture_default_str();
  sim_cmd->add_option("--n", sim.n, "Training rows")->capture_default_str();
  sim_cmd->add_option("--family", sim.family, "Prior family of the true coefficients")
      ->capture_default_str();
  sim_cmd->add_option("--sigma2", sim.sigma2, "Gaussian noise variance")->capture_default_str();
  sim_cmd->add_option("--noise", sim.noise, "gaussian or uniform (on [2, 30])")->capture_default_str();
  sim_cmd->add_option("--test-fraction", sim.test_fraction, "Test rows as a fraction of n")
      ->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "Seed")->capture_default_str();
  sim_cmd->add_option("--out", sim.out, "Output prefix")->capture_default_str();

  BenchmarkArgs bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Run a simulation experiment");
  bench_cmd
      ->add_option("--experiment", bench.experiment,
                   "nrmse_vs_n, params_vs_n_d_sigma, misspecification, em_vs_cv_gaussian or "
                   "em_vs_cv_uniform")
      ->required();
  bench_cmd->add_option("--replicates", bench.replicates, "Replicates per cell")->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "Base seed; replicate r uses seed + r")
      ->capture_default_str();
  bench_cmd->add_option("--threads", bench.threads, "Worker threads")->capture_default_str();
  bench_cmd->add_flag("--timing", bench.timing, "Record wall_ms (output is then not reproducible)");
  bench_cmd->add_option("--config", bench.config, "EM configuration file");
  bench_cmd->add_option("--n", bench.n_values, "Override the sample sizes");
  bench_cmd->add_option("--grid-side", bench.grid_sides, "Override the grid side lengths");
  bench_cmd->add_option("--sigma2", bench.sigma2_values, "Override the noise variances");
  bench_cmd->add_option("--families", bench.families, "Override the families");
  bench_cmd->add_option("--cv-folds", bench.cv_folds, "Folds of the CV baseline")->capture_default_str();
  bench_cmd->add_option("--out", bench.out, "Output prefix")->capture_default_str();

  ValidateArgs val;
  auto* val_cmd = app.add_subcommand("validate", "Check a config, geometry and dataset without fitting");
  val_cmd->add_option("--data", val.data, "Dataset CSV");
  val_cmd->add_option("--config", val.config, "Configuration file");
  val_cmd->add_option("--family", val.family, "diagonal, matern or wcar");
  val.geom.add_to(val_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help() << "status=ok command=help\n";
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All) << "status=ok command=help\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    out << "status=error code=1 kind=usage message=\"" << single_line(e.what()) << "\"\n";
    return kExitUsage;
  }

  try {
    std::string status;
    if (*fit_cmd)
      status = run_fit(fit, out, verbose);
    else if (*pred_cmd)
      status = run_predict(pred);
    else if (*sim_cmd)
      status = run_simulate(sim);
    else if (*bench_cmd)
      status = run_benchmark(bench);
    else
      status = run_validate(val, out, verbose);
    out << status << '\n';
    return kExitOk;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    out << "status=error code=2 kind=numerical iteration=" << e.iteration() << " message=\""
        << single_line(e.what()) << "\"\n";
    return kExitNumerical;
  } catch (const ModelError& e) {
    err << "numerical failure: " << e.what() << '\n';
    out << "status=error code=2 kind=numerical message=\"" << single_line(e.what()) << "\"\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    out << "status=error code=1 kind=usage message=\"" << single_line(e.what()) << "\"\n";
    return kExitUsage;
  }
}

}  // namespace ridgeem
