#include "ridgeem/io.hpp"
#include "ridgeem/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace ridgeem {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_row(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.emplace_back(trim(cur));
  return cells;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

double cell_number(const CsvTable& t, std::size_t r, std::size_t c, const std::string& path) {
  const auto v = parse_number(t.rows[r][c]);
  if (!v || !std::isfinite(*v))
    throw DataError(path + ": row " + std::to_string(r + 1) + ", column '" + t.header[c] +
                    "' is not a finite number");
  return *v;
}

std::size_t column_of(const CsvTable& t, const std::string& name, const std::string& path) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw DataError(path + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

bool parse_bool(std::string_view v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw DataError(where + ": expected a boolean, got '" + std::string(v) + "'");
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text == "NA" || text == "NaN" || text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto cells = split_row(s);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(t.header.size()) + " fields, found " +
                      std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw DataError(path + ": empty file");
  return t;
}

Dataset load_dataset(const std::string& path, bool center) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 2 || t.header.front() != "y")
    throw DataError(path + ": expected header 'y,x_1,...,x_d'");
  if (t.rows.empty()) throw DataError(path + ": no data rows");
  const auto n = static_cast<Index>(t.rows.size());
  const auto d = static_cast<Index>(t.header.size() - 1);
  Eigen::VectorXd y(n);
  Eigen::MatrixXd X(n, d);
  for (Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    y(i) = cell_number(t, r, 0, path);
    for (Index j = 0; j < d; ++j) X(i, j) = cell_number(t, r, static_cast<std::size_t>(j + 1), path);
  }
  try {
    return make_dataset(std::move(y), std::move(X), center);
  } catch (const std::invalid_argument& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_dataset(const std::string& path, const Dataset& data) {
  auto out = open_out(path);
  out << 'y';
  for (Index j = 0; j < data.d(); ++j) out << ",x_" << (j + 1);
  out << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    out << format_number(data.y(i));
    for (Index j = 0; j < data.d(); ++j) out << ',' << format_number(data.X(i, j));
    out << '\n';
  }
}

Eigen::MatrixXd load_design(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t first = !t.header.empty() && t.header.front() == "y" ? 1 : 0;
  if (t.header.size() <= first) throw DataError(path + ": no predictor columns");
  const auto n = static_cast<Index>(t.rows.size());
  const auto d = static_cast<Index>(t.header.size() - first);
  Eigen::MatrixXd X(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j)
      X(i, j) = cell_number(t, static_cast<std::size_t>(i), static_cast<std::size_t>(j) + first, path);
  return X;
}

GridGeometry load_geometry(const std::string& coords_path,
                           const std::optional<std::string>& edges_path) {
  const CsvTable ct = read_csv(coords_path);
  const auto ci = column_of(ct, "id", coords_path);
  const auto cx = column_of(ct, "x", coords_path);
  const auto cy = column_of(ct, "y", coords_path);
  const auto d = static_cast<Index>(ct.rows.size());
  Eigen::MatrixX2d coords(d, 2);
  std::map<std::string, Index> index_of;
  for (Index j = 0; j < d; ++j) {
    const auto r = static_cast<std::size_t>(j);
    if (!index_of.emplace(ct.rows[r][ci], j).second)
      throw DataError(coords_path + ": duplicate site id '" + ct.rows[r][ci] + "'");
    coords(j, 0) = cell_number(ct, r, cx, coords_path);
    coords(j, 1) = cell_number(ct, r, cy, coords_path);
  }
  std::vector<std::pair<Index, Index>> edges;
  if (edges_path) {
    const CsvTable et = read_csv(*edges_path);
    const auto ei = column_of(et, "i", *edges_path);
    const auto ej = column_of(et, "j", *edges_path);
    auto lookup = [&](const std::string& id) {
      const auto it = index_of.find(id);
      if (it == index_of.end()) throw DataError(*edges_path + ": unknown site id '" + id + "'");
      return it->second;
    };
    for (const auto& row : et.rows) edges.emplace_back(lookup(row[ei]), lookup(row[ej]));
  }
  try {
    return geometry_from_sites(coords, edges);
  } catch (const std::invalid_argument& e) {
    throw DataError(coords_path + ": " + e.what());
  }
}

void write_coords_csv(const std::string& path, const GridGeometry& geom) {
  auto out = open_out(path);
  out << "id,x,y\n";
  for (Index j = 0; j < geom.size(); ++j)
    out << (j + 1) << ',' << format_number(geom.coords(j, 0)) << ','
        << format_number(geom.coords(j, 1)) << '\n';
}

void write_edges_csv(const std::string& path, const GridGeometry& geom) {
  auto out = open_out(path);
  out << "i,j\n";
  for (Index a = 0; a < geom.size(); ++a)
    for (Index b = a + 1; b < geom.size(); ++b)
      if (geom.adjacency(a, b) != 0.0) out << (a + 1) << ',' << (b + 1) << '\n';
}

GridGeometry parse_grid_spec(const std::string& spec) {
  const auto x = spec.find_first_of("xX");
  int rows = 0, cols = 0;
  if (x != std::string::npos) {
    const char* b = spec.data();
    const char* e = b + spec.size();
    const auto r1 = std::from_chars(b, b + x, rows);
    const auto r2 = std::from_chars(b + x + 1, e, cols);
    if (r1.ec != std::errc{} || r1.ptr != b + x || r2.ec != std::errc{} || r2.ptr != e) rows = 0;
  }
  if (rows < 1 || cols < 1) throw DataError("grid spec must look like 15x15, got '" + spec + "'");
  return build_grid_geometry(rows, cols);
}

void write_beta_csv(const std::string& path, const GridGeometry* geom, const Eigen::VectorXd& beta) {
  auto out = open_out(path);
  out << "site_id,row,col,beta_hat\n";
  for (Index j = 0; j < beta.size(); ++j) {
    const double row = geom ? geom->coords(j, 0) : 1.0;
    const double col = geom ? geom->coords(j, 1) : static_cast<double>(j + 1);
    out << (j + 1) << ',' << format_number(row) << ',' << format_number(col) << ','
        << format_number(beta(j)) << '\n';
  }
}

FileConfig parse_config(const std::string& text, const std::string& source) {
  FileConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const auto s = trim(std::string_view(line).substr(0, hash));
    if (s.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw DataError(where + ": expected key = value");
    const std::string key(trim(s.substr(0, eq)));
    const std::string value(trim(s.substr(eq + 1)));
    auto number = [&] {
      const auto v = parse_number(value);
      if (!v || !std::isfinite(*v)) throw DataError(where + ": '" + key + "' needs a number");
      return *v;
    };
    auto integer = [&] {
      const double v = number();
      if (v != std::floor(v)) throw DataError(where + ": '" + key + "' needs an integer");
      return static_cast<int>(v);
    };
    if (key == "family") {
      try {
        cfg.family = parse_family_kind(value);
      } catch (const std::exception& e) {
        throw DataError(where + ": " + e.what());
      }
    } else if (key == "tol") {
      cfg.em.tol = number();
    } else if (key == "max_iter") {
      cfg.em.max_iter = integer();
    } else if (key == "center") {
      cfg.em.center = parse_bool(value, where);
    } else if (key == "smoothness") {
      if (number() != 1.5) throw DataError(where + ": only smoothness = 1.5 is supported");
    } else if (key == "phi_min") {
      cfg.em.phi_min = number();
    } else if (key == "phi_max") {
      cfg.em.phi_max = number();
    } else if (key == "alpha_eps") {
      cfg.em.alpha_eps = number();
    } else if (key == "seed") {
      std::uint64_t seed = 0;
      const auto res = std::from_chars(value.data(), value.data() + value.size(), seed);
      if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw DataError(where + ": seed must be an unsigned 64-bit integer");
      cfg.em.seed = seed;
    } else if (key == "opt_tol") {
      cfg.em.inner.tol = number();
    } else if (key == "opt_max_iter") {
      cfg.em.inner.max_iter = integer();
    } else if (key == "history_size") {
      cfg.em.inner.history_size = integer();
    } else if (key == "analytic_wcar_gradient") {
      cfg.em.analytic_wcar_gradient = parse_bool(value, where);
    } else if (key == "analytic_matern_gradient") {
      cfg.em.analytic_matern_gradient = parse_bool(value, where);
    } else if (key == "mean_mode") {
      if (value == "zero")
        cfg.em.mean_mode = MeanMode::zero;
      else if (value == "fixed")
        cfg.em.mean_mode = MeanMode::fixed_constant;
      else if (value == "estimated")
        cfg.em.mean_mode = MeanMode::estimated_constant;
      else
        throw DataError(where + ": mean_mode must be zero, fixed or estimated");
    } else if (key == "mean_level") {
      cfg.em.mean_level = number();
    } else {
      throw DataError(where + ": unknown key '" + key + "'");
    }
  }
  if (!(cfg.em.tol > 0.0)) throw DataError(source + ": tol must be positive");
  if (cfg.em.max_iter < 1) throw DataError(source + ": max_iter must be at least 1");
  if (!(cfg.em.phi_min > 0.0)) throw DataError(source + ": phi_min must be positive");
  if (cfg.em.phi_max && !(*cfg.em.phi_max > cfg.em.phi_min))
    throw DataError(source + ": phi_max must exceed phi_min");
  if (!(cfg.em.alpha_eps > 0.0 && cfg.em.alpha_eps < 1.0))
    throw DataError(source + ": alpha_eps must lie in (0, 1)");
  if (cfg.em.inner.history_size < 1) throw DataError(source + ": history_size must be positive");
  return cfg;
}

FileConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace ridgeem
