#include <cmath>
#include <random>

#include "doctest.h"
#include "kryging/toeplitz_ops.hpp"

using namespace kryging;

namespace {

Eigen::VectorXd random_vector(Eigen::Index n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

Eigen::VectorXd unit_first(std::size_t n) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  e[0] = 1.0;
  return e;
}

double dense_dlogdet(const GridSpec& g, const MaternSpec& s) {
  const auto S = dense_from_first_column(g, first_column(g, s));
  const auto dS =
      dense_from_first_column(g, first_column(g, s, KernelTerm::drho));
  return Eigen::LLT<Eigen::MatrixXd>(S).solve(dS).trace();
}

}  // namespace

TEST_CASE("embedding layout") {
  const GridSpec g = GridSpec::unit_square(5, 7);
  const auto op = BttbOperator::matern(g, MaternSpec{1.0, 0.2, 0.5});
  CHECK(op.embed_n1() == 9);
  CHECK(op.embed_n2() == 13);
  CHECK(op.spectrum_size() == 117);
  CHECK(op.imag_residue() < 1e-8);
  CHECK(op.clamp_count() == 0);
  const auto e1 = op.apply(unit_first(g.size()));
  CHECK((e1 - op.first_col()).norm() <= 1e-12 * op.first_col().norm());
}

TEST_CASE("identity operator") {
  const GridSpec g = GridSpec::unit_square(6, 4);
  const BttbOperator op(g, unit_first(g.size()));
  const auto v = random_vector(24, 3);
  CHECK((op.apply(v) - v).norm() <= 1e-13 * v.norm());
  CHECK(logdet(op) == doctest::Approx(0.0));
  CHECK(op.apply(Eigen::VectorXd::Zero(24)).norm() == 0.0);
  CHECK_THROWS_AS(op.apply(Eigen::VectorXd::Zero(5)), InputError);
}

TEST_CASE("matvec matches dense product") {
  for (bool pad : {false, true}) {
    for (auto [n1, n2] : {std::pair{4, 4}, {7, 5}, {13, 11}}) {
      const GridSpec g = GridSpec::unit_square(n1, n2);
      const MaternSpec s{1.0, 0.2, 0.5};
      EmbeddingOptions eo;
      eo.pad_fast = pad;
      const auto op = BttbOperator::matern(g, s, eo);
      const auto S = dense_from_first_column(g, first_column(g, s));
      const auto v = random_vector(static_cast<Eigen::Index>(g.size()), 11);
      const Eigen::VectorXd ref = S * v;
      CHECK((op.apply(v) - ref).norm() <= 1e-10 * ref.norm());
    }
  }
}

TEST_CASE("matvec is linear and symmetric") {
  const GridSpec g = GridSpec::unit_square(17, 9);
  const auto op = BttbOperator::matern(g, MaternSpec{1.0, 0.1, 1.5});
  const auto n = static_cast<Eigen::Index>(g.size());
  const auto u = random_vector(n, 1), v = random_vector(n, 2);
  const Eigen::VectorXd lhs = op.apply(Eigen::VectorXd(2.5 * u - 0.7 * v));
  const Eigen::VectorXd rhs = 2.5 * op.apply(u) - 0.7 * op.apply(v);
  CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
  const double a = u.dot(op.apply(v)), b = op.apply(u).dot(v);
  CHECK(std::abs(a - b) <= 1e-10 * std::abs(a));
}

TEST_CASE("padded and unpadded matvecs agree") {
  const GridSpec g = GridSpec::unit_square(23, 19);
  const MaternSpec s{1.0, 0.15, 0.5};
  EmbeddingOptions eo;
  eo.pad_fast = true;
  const auto a = BttbOperator::matern(g, s);
  const auto b = BttbOperator::matern(g, s, eo);
  const auto v = random_vector(static_cast<Eigen::Index>(g.size()), 5);
  CHECK((a.apply(v) - b.apply(v)).norm() <= 1e-12 * a.apply(v).norm());
  CHECK(logdet(a) == logdet(b));
  CHECK(fast_fft_length(45) == 45);
  CHECK(fast_fft_length(47) == 48);
  CHECK(fast_fft_length(1) == 1);
}

TEST_CASE("logdet error shrinks with grid size") {
  for (double rho : {0.05, 0.1, 0.2}) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t m : {8, 16, 32}) {
      const GridSpec g = GridSpec::unit_square(m, m);
      const MaternSpec s{1.0, rho, 0.5};
      const double exact = dense_logdet(g, first_column(g, s));
      const double err =
          std::abs(logdet(BttbOperator::matern(g, s)) - exact) / std::abs(exact);
      CAPTURE(rho);
      CAPTURE(m);
      CHECK(err <= prev);
      prev = err;
    }
  }
}

TEST_CASE("dlogdet matches finite differences of logdet") {
  const GridSpec g = GridSpec::unit_square(8, 8);
  for (double rho : {0.05, 0.1, 0.3}) {
    const MaternSpec s{1.0, rho, 0.5};
    const auto op = BttbOperator::matern(g, s);
    const auto dop = BttbOperator::matern_derivative(g, s);
    const double h = 1e-5 * rho;
    const double fd =
        (logdet(BttbOperator::matern(g, {1.0, rho + h, 0.5})) -
         logdet(BttbOperator::matern(g, {1.0, rho - h, 0.5}))) /
        (2 * h);
    CAPTURE(rho);
    CHECK(dlogdet_drho(op, dop) == doctest::Approx(fd).epsilon(1e-3));
  }
}

TEST_CASE("dlogdet is close to the dense trace") {
  for (std::size_t m : {8, 16}) {
    const GridSpec g = GridSpec::unit_square(m, m);
    const MaternSpec s{1.0, 0.1, 0.5};
    const double exact_ld = dense_logdet(g, first_column(g, s));
    const auto op = BttbOperator::matern(g, s);
    const double ld_err = std::abs(logdet(op) - exact_ld) / std::abs(exact_ld);
    const double exact = dense_dlogdet(g, s);
    const double err =
        std::abs(dlogdet_drho(op, BttbOperator::matern_derivative(g, s)) -
                 exact) /
        std::abs(exact);
    CAPTURE(m);
    CAPTURE(ld_err);
    CAPTURE(err);
    CHECK(err <= ld_err);
  }
}

TEST_CASE("zero derivative operator") {
  const GridSpec g = GridSpec::unit_square(6, 6);
  const auto op = BttbOperator::matern(g, MaternSpec{1.0, 0.1, 0.5});
  const BttbOperator zero(g, Eigen::VectorXd::Zero(36), {},
                          SpectrumKind::derivative);
  CHECK(dlogdet_drho(op, zero) == 0.0);
}

TEST_CASE("sampling: identity covariance has unit variance") {
  const GridSpec g = GridSpec::unit_square(10, 10);
  const BttbOperator op(g, unit_first(g.size()));
  double s1 = 0.0, s2 = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto x = sample_gaussian(op, 77, seed);
    s1 += x.sum();
    s2 += x.squaredNorm();
    count += static_cast<std::size_t>(x.size());
  }
  const double mean = s1 / count;
  const double var = s2 / count - mean * mean;
  CHECK(count == 100000);
  CHECK(var >= 0.98);
  CHECK(var <= 1.02);
}

TEST_CASE("sampling: empirical covariance at fixed lags") {
  const GridSpec g = GridSpec::unit_square(16, 16);
  const MaternSpec s{1.0, 0.05, 0.5};
  const auto op = BttbOperator::matern(g, s);
  REQUIRE(op.clamp_count() == 0);
  const std::size_t N = 2000;
  const std::pair<std::size_t, std::size_t> pairs[5] = {
      {g.index(0, 0), g.index(0, 0)},
      {g.index(3, 4), g.index(4, 4)},
      {g.index(7, 7), g.index(8, 8)},
      {g.index(2, 9), g.index(2, 11)},
      {g.index(15, 0), g.index(13, 1)}};
  double acc[5] = {};
  for (std::size_t b = 0; b < N; ++b) {
    const auto x = sample_gaussian(op, 2024, b);
    for (int j = 0; j < 5; ++j)
      acc[j] += x[static_cast<Eigen::Index>(pairs[j].first)] *
                x[static_cast<Eigen::Index>(pairs[j].second)];
  }
  for (int j = 0; j < 5; ++j) {
    const auto [a, b] = pairs[j];
    const double dx = g.node_x(a % 16) - g.node_x(b % 16);
    const double dy = g.node_y(a / 16) - g.node_y(b / 16);
    const double r = matern_corr(std::hypot(dx, dy), 0.05, 0.5);
    const double se = std::sqrt((1.0 + r * r) / N);
    CAPTURE(j);
    CHECK(std::abs(acc[j] / N - r) < 3.0 * se);
  }
}

TEST_CASE("sampling is deterministic per seed and stream") {
  const GridSpec g = GridSpec::unit_square(9, 12);
  const auto op = BttbOperator::matern(g, MaternSpec{1.0, 0.1, 0.5});
  const auto a = sample_gaussian(op, 5, 1);
  const auto b = sample_gaussian(op, 5, 1);
  const auto c = sample_gaussian(op, 5, 2);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("excessive clamping is reported") {
  // A strongly correlated smooth field on a coarse lattice has an indefinite
  // minimal embedding.
  const GridSpec g = GridSpec::unit_square(6, 6);
  const auto op = BttbOperator::matern(g, MaternSpec{1.0, 5.0, 2.5});
  REQUIRE(op.clamp_fraction() > 0.05);
  CHECK(op.min_raw_eigenvalue() < 0.0);
  CHECK_THROWS_AS(logdet(op), EmbeddingError);
  CHECK_THROWS_AS(sample_gaussian(op, 1), EmbeddingError);
  try {
    logdet(op);
  } catch (const EmbeddingError& e) {
    CHECK(e.clamp_count() == op.clamp_count());
    CHECK(e.total() == op.spectrum_size());
  }
  // Matvecs stay exact regardless of clamping.
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(36, -1.0, 1.0);
  const auto S = dense_from_first_column(g, op.first_col());
  CHECK((op.apply(v) - S * v).norm() <= 1e-10 * (S * v).norm());
  EmbeddingOptions loose;
  loose.max_clamp_fraction = 0.6;
  const auto op2 = BttbOperator::matern(g, MaternSpec{1.0, 5.0, 2.5}, loose);
  CHECK(std::isfinite(logdet(op2)));
}
