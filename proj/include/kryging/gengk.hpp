#ifndef KRYGING_GENGK_HPP
#define KRYGING_GENGK_HPP

#include <cstddef>
#include <optional>

#include <Eigen/Dense>

#include "kryging/obs_map.hpp"
#include "kryging/toeplitz_ops.hpp"

namespace kryging {

struct GenGKOptions {
  std::size_t k = 50;
  // Full reorthogonalization of new u against U (Euclidean) and new v
  // against V (Sigma inner product).
  bool reorthogonalize = false;
  // A normalizer below breakdown_tol * scale ends the recurrence early.
  double breakdown_tol = 1e-14;
};

/// Output of the generalized Golub-Kahan bidiagonalization of A Sigma with
/// weights (tau^2 I, Sigma):
///
///   A Sigma V_k = U_{k+1} B_k,   U^T U = tau^2 I,   V^T Sigma V = I.
///
/// `k()` is the effective order, which is smaller than requested when the
/// recurrence broke down (breakdown_at set).
struct GenGKFactorization {
  double beta1 = 0.0;
  double tau2 = 1.0;
  Eigen::MatrixXd U;       // p x (k+1)
  Eigen::MatrixXd V;       // n x (k+1), last column unused when broken down
  Eigen::MatrixXd SigmaV;  // Sigma * V, kept to avoid repeated matvecs
  Eigen::VectorXd alpha;   // alpha_1 .. alpha_k
  Eigen::VectorXd beta;    // beta_2 .. beta_{k+1}
  std::optional<std::size_t> breakdown_at;

  std::size_t k() const { return static_cast<std::size_t>(alpha.size()); }
  /// (k+1) x k lower bidiagonal B_k.
  Eigen::MatrixXd bidiagonal() const;
  /// b = beta1 * u_1.
  Eigen::VectorXd rhs() const { return beta1 * U.col(0); }
};

/// Regularized latent-state estimate in the Krylov subspace.
struct KrygingSolution {
  Eigen::VectorXd z;          // projected coefficients, length k
  Eigen::VectorXd w;          // V_k z  (= Sigma^{-1} x_star)
  Eigen::VectorXd x_star;     // Sigma V_k z
  Eigen::VectorXd psi_star;   // b - A x_star
  double quad = 0.0;          // ||z||^2, approximates x^T Sigma^{-1} x
};

GenGKFactorization gengk_factorize(const SparseMap& A, const BttbOperator& sigma,
                                   const Eigen::VectorXd& b, double tau2,
                                   const GenGKOptions& opts = {});

/// Solves min ||B z - beta1 e1||^2 + ||z||^2 / sigma2 and maps back to the
/// lattice.
KrygingSolution solve(const GenGKFactorization& fact, double sigma2,
                      const SparseMap& A);

}  // namespace kryging

#endif  // KRYGING_GENGK_HPP
