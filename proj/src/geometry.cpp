#include "ridgeem/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ridgeem {

namespace {

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixX2d& coords) {
  const Index d = coords.rows();
  Eigen::MatrixXd dist(d, d);
  for (Index j = 0; j < d; ++j) {
    dist(j, j) = 0.0;
    for (Index i = j + 1; i < d; ++i) {
      const double h = std::hypot(coords(i, 0) - coords(j, 0), coords(i, 1) - coords(j, 1));
      dist(i, j) = h;
      dist(j, i) = h;
    }
  }
  return dist;
}

}  // namespace

GridGeometry build_grid_geometry(int rows, int cols) {
  if (rows < 1 || cols < 1 || static_cast<long>(rows) * cols < 2)
    throw std::invalid_argument("grid must have at least two sites, got " + std::to_string(rows) +
                                "x" + std::to_string(cols));
  const Index d = static_cast<Index>(rows) * cols;
  GridGeometry g;
  g.coords.resize(d, 2);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Index j = static_cast<Index>(r) * cols + c;
      g.coords(j, 0) = r + 1;
      g.coords(j, 1) = c + 1;
    }
  g.dist = pairwise_distances(g.coords);
  g.adjacency = Eigen::MatrixXd::Zero(d, d);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Index j = static_cast<Index>(r) * cols + c;
      if (c + 1 < cols) g.adjacency(j, j + 1) = g.adjacency(j + 1, j) = 1.0;
      if (r + 1 < rows) g.adjacency(j, j + cols) = g.adjacency(j + cols, j) = 1.0;
    }
  g.neighbor_counts = g.adjacency.rowwise().sum();
  return g;
}

GridGeometry geometry_from_sites(const Eigen::MatrixX2d& coords,
                                 std::span<const std::pair<Index, Index>> edges) {
  const Index d = coords.rows();
  if (d < 1) throw std::invalid_argument("geometry needs at least one site");
  if (!coords.allFinite()) throw std::invalid_argument("site coordinates must be finite");
  GridGeometry g;
  g.coords = coords;
  g.dist = pairwise_distances(coords);
  g.adjacency = Eigen::MatrixXd::Zero(d, d);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= d || j >= d)
      throw std::invalid_argument("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                  ") references a site outside [0, " + std::to_string(d) + ")");
    if (i == j) throw std::invalid_argument("self loop at site " + std::to_string(i));
    g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
  }
  g.neighbor_counts = g.adjacency.rowwise().sum();
  check_geometry(g);
  return g;
}

void check_geometry(const GridGeometry& g) {
  const Index d = g.size();
  if (g.dist.rows() != d || g.dist.cols() != d || g.adjacency.rows() != d ||
      g.adjacency.cols() != d || g.neighbor_counts.size() != d)
    throw std::invalid_argument("geometry arrays disagree on the number of sites");
  for (Index j = 0; j < d; ++j) {
    if (g.dist(j, j) != 0.0 || g.adjacency(j, j) != 0.0)
      throw std::invalid_argument("geometry diagonal must be zero");
    for (Index i = j + 1; i < d; ++i) {
      if (!(g.dist(i, j) > 0.0))
        throw std::invalid_argument("sites " + std::to_string(i) + " and " + std::to_string(j) +
                                    " share a location");
      if (g.dist(i, j) != g.dist(j, i) || g.adjacency(i, j) != g.adjacency(j, i))
        throw std::invalid_argument("geometry matrices must be symmetric");
    }
  }
}

}  // namespace ridgeem
