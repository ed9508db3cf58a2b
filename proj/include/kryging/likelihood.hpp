#ifndef KRYGING_LIKELIHOOD_HPP
#define KRYGING_LIKELIHOOD_HPP

#include <cstddef>

#include <Eigen/Dense>

#include "kryging/gengk.hpp"
#include "kryging/grid_cov.hpp"
#include "kryging/obs_map.hpp"
#include "kryging/toeplitz_ops.hpp"

namespace kryging {

/// Observations y = X beta + A x + eps on a latent lattice.
struct ModelData {
  GridSpec grid;
  SparseMap A;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  double nu = 0.5;

  std::size_t p() const { return static_cast<std::size_t>(y.size()); }
  std::size_t n() const { return grid.size(); }
  std::size_t q() const { return static_cast<std::size_t>(X.cols()); }
  void validate() const;
};

enum class LogdetMethod {
  circulant,  // O(n log n) block-circulant approximation
  dense,      // exact Cholesky; small grids only
};

struct LikelihoodOptions {
  GenGKOptions gengk;
  EmbeddingOptions embedding;
  LogdetMethod logdet = LogdetMethod::circulant;
};

/// Optimizer-space coordinates: [beta..., log sigma2, log tau2, log rho].
Eigen::VectorXd to_params(const ThetaParams& theta);
ThetaParams from_params(const Eigen::VectorXd& params);

/// Log-determinant of the correlation matrix and its rho-derivative.
struct LogdetTerms {
  double logdet = 0.0;
  double dlogdet = 0.0;
  std::size_t clamp_count = 0;
};
LogdetTerms logdet_terms(const GridSpec& grid, double rho, double nu,
                         const EmbeddingOptions& emb, LogdetMethod method);

/// One evaluation of the negated approximate profile log-likelihood.
struct ObjectiveState {
  ThetaParams theta;
  Eigen::VectorXd params;        // optimizer space
  double value = 0.0;            // -pl(theta), constants dropped
  Eigen::VectorXd grad;          // d value / d params (empty if not requested)
  Eigen::VectorXd grad_natural;  // d pl / d (beta, lambda2, lambda_e2, rho)
  GenGKFactorization factorization;
  KrygingSolution solution;
  double logdet = 0.0;
  double dlogdet = 0.0;
  std::size_t clamp_count = 0;
  std::size_t k_effective = 0;
};

ObjectiveState profile_loglik(const ModelData& data, const ThetaParams& theta,
                              const LikelihoodOptions& opts,
                              bool with_gradient = true);

/// Approximate score of pl in natural coordinates (beta, lambda2, lambda_e2,
/// rho). `dlogdet` is d logdet Sigma / d rho from whichever method is in use.
Eigen::VectorXd gradient(const ModelData& data, const ThetaParams& theta,
                         const KrygingSolution& solution, double dlogdet,
                         const EmbeddingOptions& emb = {});

/// Gradient of -pl in optimizer space from the natural-space score of pl.
Eigen::VectorXd optimizer_gradient(const ThetaParams& theta,
                                   const Eigen::VectorXd& grad_natural);

/// g g^T + ridge * I.
Eigen::MatrixXd hessian_rank_one(const Eigen::VectorXd& grad,
                                 double ridge = 0.0);

/// Approximate Hessian of pl in natural coordinates (beta, lambda2, lambda_e2,
/// rho) with the posterior covariance replaced by its Krylov low-rank form.
/// The d2 logdet / d rho2 term is a central difference of the logdet
/// derivative with step 1e-4 * rho.
Eigen::MatrixXd hessian_full_approx(const ModelData& data,
                                    const ThetaParams& theta,
                                    const GenGKFactorization& fact,
                                    const KrygingSolution& solution,
                                    const LikelihoodOptions& opts);

/// Hessian of -pl in optimizer space from natural-space derivatives of pl.
Eigen::MatrixXd optimizer_hessian(const ThetaParams& theta,
                                  const Eigen::MatrixXd& hess_natural,
                                  const Eigen::VectorXd& grad_natural);

}  // namespace kryging

#endif  // KRYGING_LIKELIHOOD_HPP
