#ifndef KRYGING_OBS_MAP_HPP
#define KRYGING_OBS_MAP_HPP

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kryging/grid_cov.hpp"

namespace kryging {

struct Location {
  double x = 0.0;
  double y = 0.0;
};

/// p x n observation mapping in compressed sparse row form. Every row is a
/// convex combination of at most four lattice nodes.
class SparseMap {
 public:
  SparseMap() = default;
  SparseMap(std::size_t n, std::vector<std::size_t> row_ptr,
            std::vector<std::size_t> cols, std::vector<double> weights);

  std::size_t rows() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  std::size_t cols() const { return n_; }
  std::size_t nnz() const { return cols_.size(); }

  std::span<const std::size_t> row_cols(std::size_t i) const {
    return {cols_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::span<const double> row_weights(std::size_t i) const {
    return {weights_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  /// A v (length p).
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  /// A^T u (length n).
  Eigen::VectorXd apply_t(const Eigen::VectorXd& u) const;
  /// Dense copy; small problems only.
  Eigen::MatrixXd to_dense() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> cols_;
  std::vector<double> weights_;
};

/// Wendland kernel (1 - d)^4_+ (1 + 4 d).
double wendland(double d);

/// Normalized Wendland weights of each location over the lattice nodes within
/// scaled Chebyshev distance 1. Locations outside the grid extents are
/// rejected with their index.
SparseMap build_map(std::span<const Location> locations, const GridSpec& grid);

/// Rows of the n x n identity selecting the given lattice nodes.
SparseMap selection_map(std::span<const std::size_t> nodes, std::size_t n);

}  // namespace kryging

#endif  // KRYGING_OBS_MAP_HPP
