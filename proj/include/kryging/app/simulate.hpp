#ifndef KRYGING_APP_SIMULATE_HPP
#define KRYGING_APP_SIMULATE_HPP

#include <cstdint>
#include <vector>

#include "kryging/app/dataset.hpp"
#include "kryging/grid_cov.hpp"
#include "kryging/toeplitz_ops.hpp"

namespace kryging::app {

/// Constant-mean Matern field on a source lattice plus white noise, optionally
/// thinned to a random subset of nodes, with a random holdout.
struct SimulationSpec {
  GridSpec grid = GridSpec::unit_square(100, 100);
  ThetaParams theta{Eigen::VectorXd::Constant(1, 44.49), 3.0, 0.5, 0.1};
  double nu = 0.5;
  double keep = 1.0;      // fraction of source nodes observed
  double holdout = 0.05;  // fraction of observed nodes held out for testing
  std::uint64_t seed = 1;
  EmbeddingOptions embedding;
};

struct Simulation {
  Dataset train, test;
  Eigen::VectorXd x_true;  // latent field on the source lattice
  std::vector<std::size_t> train_nodes, test_nodes;
};

Simulation simulate(const SimulationSpec& spec);

}  // namespace kryging::app

#endif  // KRYGING_APP_SIMULATE_HPP
