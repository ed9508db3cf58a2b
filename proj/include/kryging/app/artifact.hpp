#ifndef KRYGING_APP_ARTIFACT_HPP
#define KRYGING_APP_ARTIFACT_HPP

#include <iosfwd>
#include <string>

#include "kryging/app/dataset.hpp"
#include "kryging/estimation.hpp"

namespace kryging::app {

/// Everything needed to predict or bootstrap after a fit. Stored as JSON:
///   format   "kryging-fit"
///   version  1
///   grid     {n1, n2, x_min, x_max, y_min, y_max}
///   nu, theta {beta[], sigma2, tau2, rho}, x_hat[] (lattice order i1 + n1 i2)
///   options  {k, reorthogonalize, clamp_floor, max_clamp_fraction}
///   covariates[], intercept
///   diagnostics {objective, iterations, evaluations, converged, stop_reason,
///                k_effective, clamp_count, grad_norm, wall_seconds,
///                objective_trace[]}
///   train    {lon[], lat[], y[], X[][] (column-major)}
struct FitArtifact {
  static constexpr int kVersion = 1;

  GridSpec grid = GridSpec::unit_square(2, 2);
  double nu = 0.5;
  ThetaParams theta;
  Eigen::VectorXd x_hat;
  std::size_t k = 50;
  bool reorthogonalize = false;
  EmbeddingOptions embedding;
  Dataset train;
  FitResult diagnostics;  // theta_hat and x_hat are not duplicated here

  ModelData model() const;
};

void write_artifact(std::ostream& out, const FitArtifact& a);
void write_artifact(const std::string& path, const FitArtifact& a);
FitArtifact read_artifact(std::istream& in, const std::string& source = "<artifact>");
FitArtifact read_artifact(const std::string& path);

}  // namespace kryging::app

#endif  // KRYGING_APP_ARTIFACT_HPP
