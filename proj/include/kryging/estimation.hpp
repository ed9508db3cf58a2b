#ifndef KRYGING_ESTIMATION_HPP
#define KRYGING_ESTIMATION_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kryging/likelihood.hpp"

namespace kryging {

enum class HessianModel {
  rank_one,     // g g^T + ridge I
  full_approx,  // Krylov approximation of the observed information
};

struct FitOptions {
  std::size_t k = 50;
  bool reorthogonalize = false;
  EmbeddingOptions embedding;
  LogdetMethod logdet = LogdetMethod::circulant;
  HessianModel hessian = HessianModel::rank_one;
  // Reject trial points whose embedding needed any eigenvalue clamping. The
  // clamp floor makes the approximate log-determinant arbitrarily negative,
  // which the optimizer would otherwise exploit.
  bool require_pd_embedding = true;

  std::size_t max_iter = 200;
  // Stop when ||grad||_inf <= tol * (1 + |f|) or when two consecutive
  // accepted steps change f by less than tol * (1 + |f|).
  double tol = 1e-6;
  double initial_radius = 1.0;
  double max_radius = 1e3;
  double min_radius = 1e-10;
  // Rank-one model ridge: ridge_scale * (1 + ||g||^2).
  double ridge_scale = 1e-6;

  // Starting points; empty means the automatic initialization only.
  std::vector<ThetaParams> starts;
  // Called after every accepted step with (iteration, state).
  std::function<void(std::size_t, const ObjectiveState&)> on_iteration;

  LikelihoodOptions likelihood() const;
};

struct FitResult {
  ThetaParams theta_hat;
  Eigen::VectorXd x_hat;
  std::vector<double> objective_trace;  // accepted iterates, non-increasing
  bool converged = false;
  std::string stop_reason;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  std::size_t rejected_steps = 0;
  std::size_t clamp_count = 0;
  std::size_t k_effective = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
  std::size_t start_index = 0;  // which start won
};

/// OLS beta, residual variance split evenly between sigma2 and tau2,
/// rho at 10% of the grid diagonal.
ThetaParams auto_init(const ModelData& data);

FitResult fit(const ModelData& data, const FitOptions& opts = {});

/// Profiled latent state at a fixed theta.
Eigen::VectorXd kryge(const ModelData& data, const ThetaParams& theta,
                      const LikelihoodOptions& opts);

/// y_hat = X_pred beta + A_pred x_hat.
Eigen::VectorXd predict(const ThetaParams& theta, const Eigen::VectorXd& x_hat,
                        const SparseMap& A_pred, const Eigen::MatrixXd& X_pred);

struct PredictionSet {
  std::vector<Location> locations;
  Eigen::VectorXd y_hat, se, ci_lo, ci_hi;
};

struct BootstrapOptions {
  std::size_t B = 20;
  std::uint64_t seed = 1;
  std::size_t k = 50;
  bool reorthogonalize = false;
  EmbeddingOptions embedding;
  std::size_t threads = 0;  // 0: hardware concurrency
};

/// Parametric bootstrap at fixed theta_hat: for each replicate draw
/// x_b ~ N(0, sigma2 Sigma) and fresh noise, re-solve for x_b at theta_hat and
/// average the squared prediction errors at the target locations.
PredictionSet bootstrap_uq(const ModelData& data, const ThetaParams& theta_hat,
                           const Eigen::VectorXd& x_hat,
                           const std::vector<Location>& locations,
                           const SparseMap& A_pred,
                           const Eigen::MatrixXd& X_pred,
                           const BootstrapOptions& opts = {});

}  // namespace kryging

#endif  // KRYGING_ESTIMATION_HPP
