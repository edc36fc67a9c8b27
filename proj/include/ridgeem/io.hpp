#pragma once

#include "ridgeem/covariance.hpp"
#include "ridgeem/em.hpp"
#include "ridgeem/geometry.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace ridgeem {

// Shortest round-trip decimal form; NaN is written as NA.
std::string format_number(double v);

// Strict numeric parse of one cell; nullopt when the text is not a number.
std::optional<double> parse_number(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Comma-separated with a header line. Blank lines and lines starting with '#'
// are skipped. Ragged rows raise DataError naming the row.
CsvTable read_csv(const std::string& path);

// First column y, remaining columns x_1..x_d in site order.
Dataset load_dataset(const std::string& path, bool center);
void write_dataset(const std::string& path, const Dataset& data);

// Numeric matrix from a CSV whose columns are all numeric. An optional
// leading y column (header "y") is dropped, so training files can be reused
// as prediction inputs.
Eigen::MatrixXd load_design(const std::string& path);

// Site coordinates (columns id, x, y) plus an edge list (columns i, j)
// referring to site ids. Without an edge file the graph is empty.
GridGeometry load_geometry(const std::string& coords_path,
                           const std::optional<std::string>& edges_path);
void write_coords_csv(const std::string& path, const GridGeometry& geom);
void write_edges_csv(const std::string& path, const GridGeometry& geom);

// "RxC" -> rook grid
GridGeometry parse_grid_spec(const std::string& spec);

// site_id,row,col,beta_hat; row/col are the geometry coordinates, or (1, j+1)
// when no geometry is available.
void write_beta_csv(const std::string& path, const GridGeometry* geom, const Eigen::VectorXd& beta);

// Plain-text key = value configuration. Recognised keys: family, tol,
// max_iter, center, smoothness (must be 1.5), phi_min, phi_max, alpha_eps,
// seed, opt_tol, opt_max_iter, history_size, analytic_wcar_gradient,
// analytic_matern_gradient, mean_mode (zero | fixed | estimated), mean_level. '#' starts a comment.
struct FileConfig {
  EmConfig em{};
  std::optional<FamilyKind> family;
};
FileConfig load_config(const std::string& path);
FileConfig parse_config(const std::string& text, const std::string& source = "<config>");

}  // namespace ridgeem
