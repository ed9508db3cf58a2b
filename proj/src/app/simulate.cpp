#include "kryging/app/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace kryging::app {

Simulation simulate(const SimulationSpec& spec) {
  spec.theta.validate();
  if (spec.theta.beta.size() != 1)
    throw InputError("simulate: a single mean parameter is expected");
  if (!(spec.keep > 0.0 && spec.keep <= 1.0))
    throw InputError("simulate: keep fraction must lie in (0, 1]");
  if (!(spec.holdout >= 0.0 && spec.holdout < 1.0))
    throw InputError("simulate: holdout fraction must lie in [0, 1)");

  const GridSpec& g = spec.grid;
  const auto op = BttbOperator::matern(
      g, MaternSpec{1.0, spec.theta.rho, spec.nu}, spec.embedding);
  Simulation sim;
  sim.x_true = std::sqrt(spec.theta.sigma2) * sample_gaussian(op, spec.seed, 0);

  const std::size_t n = g.size();
  std::vector<std::size_t> nodes(n);
  std::iota(nodes.begin(), nodes.end(), 0);
  std::seed_seq ss_pick{spec.seed, std::uint64_t{1}};
  std::mt19937_64 pick(ss_pick);
  std::shuffle(nodes.begin(), nodes.end(), pick);
  const auto kept = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.keep * static_cast<double>(n))));
  nodes.resize(kept);
  const auto ntest = static_cast<std::size_t>(
      std::llround(spec.holdout * static_cast<double>(kept)));
  sim.test_nodes.assign(nodes.begin(), nodes.begin() + static_cast<long>(ntest));
  sim.train_nodes.assign(nodes.begin() + static_cast<long>(ntest), nodes.end());
  std::sort(sim.test_nodes.begin(), sim.test_nodes.end());
  std::sort(sim.train_nodes.begin(), sim.train_nodes.end());

  // Noise is drawn in node order over the whole lattice so the observed
  // values do not depend on which nodes are kept.
  std::seed_seq ss_noise{spec.seed, std::uint64_t{2}};
  std::mt19937_64 noise(ss_noise);
  std::normal_distribution<double> nd;
  const double tau = std::sqrt(spec.theta.tau2);
  const double beta = spec.theta.beta[0];
  Eigen::VectorXd y_all(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < y_all.size(); ++i)
    y_all[i] = beta + sim.x_true[i] + tau * nd(noise);

  auto make = [&](const std::vector<std::size_t>& idx) {
    Dataset d;
    d.intercept = true;
    d.covariate_names = {"(intercept)"};
    d.locations.reserve(idx.size());
    d.y.resize(static_cast<Eigen::Index>(idx.size()));
    d.X = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(idx.size()), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t j = idx[i];
      d.locations.push_back({g.node_x(j % g.n1()), g.node_y(j / g.n1())});
      d.y[static_cast<Eigen::Index>(i)] = y_all[static_cast<Eigen::Index>(j)];
    }
    return d;
  };
  sim.train = make(sim.train_nodes);
  sim.test = make(sim.test_nodes);
  return sim;
}

}  // namespace kryging::app
