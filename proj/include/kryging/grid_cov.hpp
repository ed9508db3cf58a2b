#ifndef KRYGING_GRID_COV_HPP
#define KRYGING_GRID_COV_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace kryging {

/// Malformed or out-of-domain user input. The CLI maps this to exit code 2.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Regular 2-D lattice. Nodes are ordered row-major with axis 1 fastest:
/// node (i1, i2) has linear index i1 + n1 * i2 and sits at
/// (x_min + i1 * dx, y_min + i2 * dy).
class GridSpec {
 public:
  GridSpec(std::size_t n1, std::size_t n2, double x_min, double x_max,
           double y_min, double y_max);

  /// Unit square [0,1]^2 with n1 x n2 nodes.
  static GridSpec unit_square(std::size_t n1, std::size_t n2) {
    return GridSpec(n1, n2, 0.0, 1.0, 0.0, 1.0);
  }

  std::size_t n1() const { return n1_; }
  std::size_t n2() const { return n2_; }
  std::size_t size() const { return n1_ * n2_; }
  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  double y_min() const { return y_min_; }
  double y_max() const { return y_max_; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }

  std::size_t index(std::size_t i1, std::size_t i2) const {
    return i1 + n1_ * i2;
  }
  double node_x(std::size_t i1) const {
    return x_min_ + static_cast<double>(i1) * dx_;
  }
  double node_y(std::size_t i2) const {
    return y_min_ + static_cast<double>(i2) * dy_;
  }
  bool contains(double x, double y) const {
    return x >= x_min_ && x <= x_max_ && y >= y_min_ && y <= y_max_;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  std::size_t n1_, n2_;
  double x_min_, x_max_, y_min_, y_max_;
  double dx_, dy_;
};

/// Matern kernel with partial sill, range and smoothness. The smoothness is
/// held fixed during estimation.
struct MaternSpec {
  double sigma2 = 1.0;
  double rho = 0.1;
  double nu = 0.5;

  void validate() const;
};

/// Model parameters (beta, sigma^2, tau^2, rho). Precisions lambda^2 = 1/sigma^2
/// and lambda_e^2 = 1/tau^2 are derived on demand.
struct ThetaParams {
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
  double tau2 = 1.0;
  double rho = 0.1;

  double lambda2() const { return 1.0 / sigma2; }
  double lambda_e2() const { return 1.0 / tau2; }
  static ThetaParams from_precisions(Eigen::VectorXd beta, double lambda2,
                                     double lambda_e2, double rho) {
    return ThetaParams{std::move(beta), 1.0 / lambda2, 1.0 / lambda_e2, rho};
  }

  void validate() const;
  std::string to_string() const;
};

/// Matern correlation at distance d. Closed forms for nu in {0.5, 1.5, 2.5};
/// other nu go through std::cyl_bessel_k.
double matern_corr(double d, double rho, double nu);

/// First derivative of matern_corr with respect to rho.
double matern_corr_drho(double d, double rho, double nu);

/// Second derivative of matern_corr with respect to rho.
double matern_corr_d2rho(double d, double rho, double nu);

/// Which kernel quantity a lattice column is built from.
enum class KernelTerm { value, drho, d2rho };

/// Covariance between node (0,0) and every node of the grid, scaled by
/// spec.sigma2. Entry 0 equals sigma2 for KernelTerm::value.
Eigen::VectorXd first_column(const GridSpec& grid, const MaternSpec& spec,
                             KernelTerm term = KernelTerm::value);

/// Dense n x n symmetric BTTB matrix defined by a lattice first column.
/// Only sensible for small grids; used for exact log-determinants and oracles.
Eigen::MatrixXd dense_from_first_column(const GridSpec& grid,
                                        const Eigen::VectorXd& col);

}  // namespace kryging

#endif  // KRYGING_GRID_COV_HPP
