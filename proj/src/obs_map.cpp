#include "kryging/obs_map.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kryging {

namespace {
// Nodes at scaled distance within this of the support boundary carry weight
// below 1e-35 and are dropped, so points lying on a node or cell edge up to
// round-off get the 1- or 2-node rows they have in exact arithmetic.
constexpr double kSupportSnap = 1e-9;
}  // namespace

SparseMap::SparseMap(std::size_t n, std::vector<std::size_t> row_ptr,
                     std::vector<std::size_t> cols, std::vector<double> weights)
    : n_(n), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)),
      weights_(std::move(weights)) {
  if (row_ptr_.empty() || row_ptr_.front() != 0 ||
      row_ptr_.back() != cols_.size() || cols_.size() != weights_.size())
    throw InputError("malformed sparse map");
  for (std::size_t c : cols_)
    if (c >= n_) throw InputError("sparse map column out of range");
}

Eigen::VectorXd SparseMap::apply(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != n_)
    throw InputError("map_apply: dimension mismatch");
  const std::size_t p = rows();
  Eigen::VectorXd out(static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) {
    double s = 0.0;
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      s += weights_[k] * v[static_cast<Eigen::Index>(cols_[k])];
    out[static_cast<Eigen::Index>(i)] = s;
  }
  return out;
}

Eigen::VectorXd SparseMap::apply_t(const Eigen::VectorXd& u) const {
  const std::size_t p = rows();
  if (static_cast<std::size_t>(u.size()) != p)
    throw InputError("map_apply_t: dimension mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < p; ++i) {
    const double ui = u[static_cast<Eigen::Index>(i)];
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      out[static_cast<Eigen::Index>(cols_[k])] += weights_[k] * ui;
  }
  return out;
}

Eigen::MatrixXd SparseMap::to_dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows()),
                                            static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cols_[k])) +=
          weights_[k];
  return m;
}

double wendland(double d) {
  if (d >= 1.0) return 0.0;
  if (d < 0.0) throw InputError("wendland: negative distance");
  const double t = 1.0 - d;
  const double t2 = t * t;
  return t2 * t2 * (1.0 + 4.0 * d);
}

SparseMap build_map(std::span<const Location> locations, const GridSpec& grid) {
  const std::size_t p = locations.size();
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> cols;
  std::vector<double> weights;
  row_ptr.reserve(p + 1);
  cols.reserve(4 * p);
  weights.reserve(4 * p);

  for (std::size_t i = 0; i < p; ++i) {
    const auto [x, y] = locations[i];
    if (!std::isfinite(x) || !std::isfinite(y) || !grid.contains(x, y))
      throw InputError("location " + std::to_string(i) +
                       " lies outside the grid extents");
    const double fx = (x - grid.x_min()) / grid.dx();
    const double fy = (y - grid.y_min()) / grid.dy();
    const auto c1 = std::min<std::size_t>(
        static_cast<std::size_t>(std::floor(fx)), grid.n1() - 2);
    const auto c2 = std::min<std::size_t>(
        static_cast<std::size_t>(std::floor(fy)), grid.n2() - 2);

    std::size_t node[4];
    double w[4];
    int count = 0;
    double total = 0.0;
    for (std::size_t j2 = c2; j2 <= c2 + 1; ++j2)
      for (std::size_t j1 = c1; j1 <= c1 + 1; ++j1) {
        const double d = std::max(std::abs(x - grid.node_x(j1)) / grid.dx(),
                                  std::abs(y - grid.node_y(j2)) / grid.dy());
        if (d >= 1.0 - kSupportSnap) continue;
        const double wt = wendland(d);
        node[count] = grid.index(j1, j2);
        w[count] = wt;
        total += wt;
        ++count;
      }
    // Nodes outside the cell lie at distance >= 1, so the four corners are
    // the whole support.
    for (int k = 0; k < count; ++k) {
      cols.push_back(node[k]);
      weights.push_back(w[k] / total);
    }
    row_ptr.push_back(cols.size());
  }
  return SparseMap(grid.size(), std::move(row_ptr), std::move(cols),
                   std::move(weights));
}

SparseMap selection_map(std::span<const std::size_t> nodes, std::size_t n) {
  std::vector<std::size_t> row_ptr(nodes.size() + 1);
  for (std::size_t i = 0; i <= nodes.size(); ++i) row_ptr[i] = i;
  return SparseMap(n, std::move(row_ptr),
                   std::vector<std::size_t>(nodes.begin(), nodes.end()),
                   std::vector<double>(nodes.size(), 1.0));
}

}  // namespace kryging
