#pragma once

#include <Eigen/Dense>

#include <span>
#include <utility>

namespace ridgeem {

using Index = Eigen::Index;

// Sites in the plane and the binary neighbourhood graph used by the CAR prior.
// Site order is the single ordering shared by X columns, beta entries and
// geometry rows; the grid constructor enumerates sites row-major.
struct GridGeometry {
  Eigen::MatrixX2d coords;          // site j -> (row, col), grid units
  Eigen::MatrixXd dist;             // Euclidean distances
  Eigen::MatrixXd adjacency;        // symmetric {0,1}, zero diagonal
  Eigen::VectorXd neighbor_counts;  // |N_i|

  Index size() const { return coords.rows(); }
  double diameter() const { return dist.size() == 0 ? 0.0 : dist.maxCoeff(); }
  bool has_isolated_sites() const {
    return size() > 0 && neighbor_counts.minCoeff() < 1.0;
  }
};

// Rook (4-neighbour) lattice on [1..rows] x [1..cols] with unit spacing.
GridGeometry build_grid_geometry(int rows, int cols);

// Geometry from explicit coordinates and an undirected edge list given as
// 0-based site indices. Duplicate edges are merged; self loops are rejected.
GridGeometry geometry_from_sites(const Eigen::MatrixX2d& coords,
                                 std::span<const std::pair<Index, Index>> edges);

// Throws std::invalid_argument if any structural invariant is broken.
void check_geometry(const GridGeometry& geom);

}  // namespace ridgeem
