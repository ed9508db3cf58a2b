#include "kryging/grid_cov.hpp"

#include <cmath>
#include <sstream>

namespace kryging {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw InputError(std::string("non-finite ") + what);
}

void check_kernel_args(double d, double rho, double nu) {
  require_finite(d, "distance");
  require_finite(rho, "range");
  require_finite(nu, "smoothness");
  if (d < 0.0) throw InputError("negative distance");
  if (rho <= 0.0) throw InputError("range must be positive");
  if (nu <= 0.0) throw InputError("smoothness must be positive");
}

bool is_half_integer(double nu, double target) {
  return std::abs(nu - target) < 1e-12;
}

// 2^{1-nu} / Gamma(nu)
double matern_norm(double nu) {
  return std::exp((1.0 - nu) * std::log(2.0) - std::lgamma(nu));
}

// K_nu for possibly negative order (K_{-nu} = K_nu).
double bessel_k(double order, double a) {
  return std::cyl_bessel_k(std::abs(order), a);
}

}  // namespace

GridSpec::GridSpec(std::size_t n1, std::size_t n2, double x_min, double x_max,
                   double y_min, double y_max)
    : n1_(n1), n2_(n2), x_min_(x_min), x_max_(x_max), y_min_(y_min),
      y_max_(y_max) {
  if (n1 < 2 || n2 < 2)
    throw InputError("grid needs at least 2 nodes along each axis");
  for (double v : {x_min, x_max, y_min, y_max}) require_finite(v, "extent");
  if (!(x_max > x_min) || !(y_max > y_min))
    throw InputError("grid extents must satisfy max > min");
  dx_ = (x_max - x_min) / static_cast<double>(n1 - 1);
  dy_ = (y_max - y_min) / static_cast<double>(n2 - 1);
}

void MaternSpec::validate() const {
  require_finite(sigma2, "partial sill");
  require_finite(rho, "range");
  require_finite(nu, "smoothness");
  if (sigma2 <= 0.0) throw InputError("partial sill must be positive");
  if (rho <= 0.0) throw InputError("range must be positive");
  if (nu <= 0.0) throw InputError("smoothness must be positive");
}

void ThetaParams::validate() const {
  for (Eigen::Index i = 0; i < beta.size(); ++i)
    require_finite(beta[i], "regression coefficient");
  for (double v : {sigma2, tau2, rho}) require_finite(v, "variance parameter");
  if (sigma2 <= 0.0 || tau2 <= 0.0 || rho <= 0.0)
    throw InputError("sigma2, tau2 and rho must be positive");
}

std::string ThetaParams::to_string() const {
  std::ostringstream os;
  os.precision(6);
  os << "beta=[";
  for (Eigen::Index i = 0; i < beta.size(); ++i)
    os << (i ? "," : "") << beta[i];
  os << "] sigma2=" << sigma2 << " tau2=" << tau2 << " rho=" << rho;
  return os.str();
}

double matern_corr(double d, double rho, double nu) {
  check_kernel_args(d, rho, nu);
  if (d == 0.0) return 1.0;
  if (is_half_integer(nu, 0.5)) return std::exp(-d / rho);
  if (is_half_integer(nu, 1.5)) {
    const double a = std::sqrt(3.0) * d / rho;
    return (1.0 + a) * std::exp(-a);
  }
  if (is_half_integer(nu, 2.5)) {
    const double a = std::sqrt(5.0) * d / rho;
    return (1.0 + a + a * a / 3.0) * std::exp(-a);
  }
  const double a = std::sqrt(2.0 * nu) * d / rho;
  if (a > 700.0) return 0.0;
  return matern_norm(nu) * std::pow(a, nu) * bessel_k(nu, a);
}

double matern_corr_drho(double d, double rho, double nu) {
  check_kernel_args(d, rho, nu);
  if (d == 0.0) return 0.0;
  if (is_half_integer(nu, 0.5)) return d / (rho * rho) * std::exp(-d / rho);
  if (is_half_integer(nu, 1.5)) {
    const double a = std::sqrt(3.0) * d / rho;
    return a * a * std::exp(-a) / rho;
  }
  if (is_half_integer(nu, 2.5)) {
    const double a = std::sqrt(5.0) * d / rho;
    return a * a * (1.0 + a) * std::exp(-a) / (3.0 * rho);
  }
  // d/da [a^nu K_nu(a)] = -a^nu K_{nu-1}(a), da/drho = -a/rho
  const double a = std::sqrt(2.0 * nu) * d / rho;
  if (a > 700.0) return 0.0;
  return matern_norm(nu) * std::pow(a, nu + 1.0) * bessel_k(nu - 1.0, a) / rho;
}

double matern_corr_d2rho(double d, double rho, double nu) {
  check_kernel_args(d, rho, nu);
  if (d == 0.0) return 0.0;
  const double r2 = rho * rho;
  if (is_half_integer(nu, 0.5)) {
    const double a = d / rho;
    return (a * a - 2.0 * a) * std::exp(-a) / r2;
  }
  if (is_half_integer(nu, 1.5)) {
    const double a = std::sqrt(3.0) * d / rho;
    return (a * a * a - 3.0 * a * a) * std::exp(-a) / r2;
  }
  if (is_half_integer(nu, 2.5)) {
    const double a = std::sqrt(5.0) * d / rho;
    const double a2 = a * a;
    return (a2 * a2 - 3.0 * a2 * a - 3.0 * a2) * std::exp(-a) / (3.0 * r2);
  }
  const double a = std::sqrt(2.0 * nu) * d / rho;
  if (a > 700.0) return 0.0;
  return matern_norm(nu) *
         (std::pow(a, nu + 2.0) * bessel_k(nu - 2.0, a) -
          3.0 * std::pow(a, nu + 1.0) * bessel_k(nu - 1.0, a)) /
         r2;
}

Eigen::VectorXd first_column(const GridSpec& grid, const MaternSpec& spec,
                             KernelTerm term) {
  spec.validate();
  const std::size_t n1 = grid.n1(), n2 = grid.n2();
  Eigen::VectorXd col(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i2 = 0; i2 < n2; ++i2) {
    const double hy = static_cast<double>(i2) * grid.dy();
    for (std::size_t i1 = 0; i1 < n1; ++i1) {
      const double hx = static_cast<double>(i1) * grid.dx();
      const double d = std::hypot(hx, hy);
      double c = 0.0;
      switch (term) {
        case KernelTerm::value: c = matern_corr(d, spec.rho, spec.nu); break;
        case KernelTerm::drho: c = matern_corr_drho(d, spec.rho, spec.nu); break;
        case KernelTerm::d2rho: c = matern_corr_d2rho(d, spec.rho, spec.nu); break;
      }
      col[static_cast<Eigen::Index>(grid.index(i1, i2))] = spec.sigma2 * c;
    }
  }
  return col;
}

Eigen::MatrixXd dense_from_first_column(const GridSpec& grid,
                                        const Eigen::VectorXd& col) {
  const auto n1 = static_cast<long>(grid.n1());
  const auto n2 = static_cast<long>(grid.n2());
  const Eigen::Index n = n1 * n2;
  if (col.size() != n) throw InputError("first column length mismatch");
  Eigen::MatrixXd m(n, n);
  for (long j2 = 0; j2 < n2; ++j2)
    for (long j1 = 0; j1 < n1; ++j1)
      for (long i2 = 0; i2 < n2; ++i2)
        for (long i1 = 0; i1 < n1; ++i1)
          m(i1 + n1 * i2, j1 + n1 * j2) =
              col[std::abs(i1 - j1) + n1 * std::abs(i2 - j2)];
  return m;
}

}  // namespace kryging
