#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "kryging/gengk.hpp"

using namespace kryging;

namespace {

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

Eigen::VectorXd randn(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

SparseMap random_map(const GridSpec& g, std::size_t p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ux(g.x_min(), g.x_max()),
      uy(g.y_min(), g.y_max());
  std::vector<Location> locs(p);
  for (auto& l : locs) l = {ux(rng), uy(rng)};
  return build_map(locs, g);
}

// Exact profiled latent state (Sigma^{-1}/sigma2 + A^T A/tau2)^{-1} A^T b/tau2.
Eigen::VectorXd dense_xhat(const Eigen::MatrixXd& S, const Eigen::MatrixXd& A,
                           const Eigen::VectorXd& b, double sigma2,
                           double tau2) {
  const Eigen::MatrixXd Si = S.inverse();
  const Eigen::MatrixXd M = Si / sigma2 + A.transpose() * A / tau2;
  return M.ldlt().solve(A.transpose() * b / tau2);
}

}  // namespace

TEST_CASE("identity operators break down after one step") {
  const GridSpec g = GridSpec::unit_square(3, 3);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(9);
  e1[0] = 1.0;
  const BttbOperator I(g, e1);
  const auto A = selection_map(iota(9), 9);
  std::mt19937_64 rng(1);
  const Eigen::VectorXd b = randn(9, rng);
  GenGKOptions o;
  o.k = 1;
  const auto f = gengk_factorize(A, I, b, 1.0, o);
  CHECK(f.beta1 == doctest::Approx(b.norm()));
  CHECK((f.U.col(0) - b / b.norm()).norm() < 1e-14);
  CHECK(f.alpha[0] == doctest::Approx(1.0));
  CHECK((f.V.col(0) - f.U.col(0)).norm() < 1e-14);
  CHECK(std::abs(f.beta[0]) < 1e-14);
  REQUIRE(f.breakdown_at.has_value());
  CHECK(*f.breakdown_at == 1);

  // Larger k stops at the same place.
  o.k = 5;
  const auto f5 = gengk_factorize(A, I, b, 1.0, o);
  CHECK(f5.k() == 1);
  const auto s = solve(f5, 2.0, A);
  CHECK((s.x_star - b * 2.0 / 3.0).norm() < 1e-12 * b.norm());
}

TEST_CASE("input validation") {
  const GridSpec g = GridSpec::unit_square(3, 3);
  const auto S = BttbOperator::matern(g, MaternSpec{1.0, 0.3, 0.5});
  const auto A = selection_map(iota(9), 9);
  const Eigen::VectorXd b = Eigen::VectorXd::Ones(9);
  CHECK_THROWS_AS(gengk_factorize(A, S, Eigen::VectorXd::Zero(9), 1.0),
                  InputError);
  CHECK_THROWS_AS(gengk_factorize(A, S, b, 0.0), InputError);
  CHECK_THROWS_AS(gengk_factorize(A, S, b, -1.0), InputError);
  GenGKOptions o;
  o.k = 0;
  CHECK_THROWS_AS(gengk_factorize(A, S, b, 1.0, o), InputError);
  const auto f = gengk_factorize(A, S, b, 1.0);
  CHECK_THROWS_AS(solve(f, 0.0, A), InputError);
}

TEST_CASE("factorization relations with reorthogonalization") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const GridSpec g(5, 5, 0.0, 1.0, 0.0, 1.3);
    const auto A = random_map(g, 20, rng);
    const auto S = BttbOperator::matern(g, MaternSpec{1.0, 0.4, 0.5});
    const Eigen::VectorXd b = randn(20, rng);
    const double tau2 = 0.3;
    GenGKOptions o;
    o.k = 12;
    o.reorthogonalize = true;
    const auto f = gengk_factorize(A, S, b, tau2, o);
    const auto k = static_cast<Eigen::Index>(f.k());
    const Eigen::MatrixXd Ad = A.to_dense();
    const Eigen::MatrixXd Sd = dense_from_first_column(g, S.first_col());
    const Eigen::MatrixXd Vk = f.V.leftCols(k);
    const Eigen::MatrixXd lhs = Ad * Sd * Vk;
    const Eigen::MatrixXd rhs = f.U * f.bidiagonal();
    CHECK((lhs - rhs).norm() <= 1e-8 * lhs.norm());
    const Eigen::MatrixXd UtU = f.U.transpose() * f.U;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(k + 1, k + 1);
    CHECK((UtU - tau2 * I).norm() <= 1e-8 * tau2);
    CHECK((Vk.transpose() * Sd * Vk - I.topLeftCorner(k, k)).norm() <= 1e-8);
    CHECK((f.SigmaV.leftCols(k) - Sd * Vk).norm() <= 1e-10 * Vk.norm());
  }
}

TEST_CASE("scaling b scales beta1 only") {
  std::mt19937_64 rng(5);
  const GridSpec g = GridSpec::unit_square(6, 5);
  const auto A = random_map(g, 25, rng);
  const auto S = BttbOperator::matern(g, MaternSpec{1.0, 0.2, 0.5});
  const Eigen::VectorXd b = randn(25, rng);
  GenGKOptions o;
  o.k = 8;
  const auto f1 = gengk_factorize(A, S, b, 0.5, o);
  const auto f2 = gengk_factorize(A, S, Eigen::VectorXd(3.5 * b), 0.5, o);
  CHECK(f2.beta1 == doctest::Approx(3.5 * f1.beta1));
  CHECK((f1.U - f2.U).norm() < 1e-10);
  CHECK((f1.V - f2.V).norm() < 1e-10 * f1.V.norm());
  CHECK((f1.alpha - f2.alpha).norm() < 1e-10 * f1.alpha.norm());
}

TEST_CASE("closed-form ridge solution for identity operators") {
  const GridSpec g = GridSpec::unit_square(4, 4);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(16);
  e1[0] = 1.0;
  const BttbOperator I(g, e1);
  const auto A = selection_map(iota(16), 16);
  std::mt19937_64 rng(8);
  const Eigen::VectorXd b = randn(16, rng);
  const auto s = solve(gengk_factorize(A, I, b, 1.0), 0.7, A);
  CHECK((s.x_star - b * 0.7 / 1.7).norm() < 1e-12 * b.norm());
  CHECK(s.quad >= 0.0);
}

TEST_CASE("k = n reproduces the dense profiled state") {
  const GridSpec g = GridSpec::unit_square(6, 6);
  const MaternSpec spec{1.0, 0.3, 0.5};
  const auto S = BttbOperator::matern(g, spec);
  const auto A = selection_map(iota(36), 36);
  std::mt19937_64 rng(3);
  const Eigen::VectorXd b = randn(36, rng);
  const double sigma2 = 1.0, tau2 = 0.25;
  GenGKOptions o;
  o.k = 36;
  o.reorthogonalize = true;
  const auto f = gengk_factorize(A, S, b, tau2, o);
  const auto s = solve(f, sigma2, A);
  const Eigen::MatrixXd Sd = dense_from_first_column(g, S.first_col());
  const Eigen::VectorXd ref = dense_xhat(Sd, A.to_dense(), b, sigma2, tau2);
  CHECK((s.x_star - ref).norm() <= 1e-6 * ref.norm());
  const double quad = ref.dot(Sd.ldlt().solve(ref));
  CHECK(s.quad == doctest::Approx(quad).epsilon(1e-6));
  CHECK((s.psi_star - (b - A.apply(s.x_star))).norm() < 1e-12 * b.norm());
  CHECK((s.w - Sd.ldlt().solve(s.x_star)).norm() <= 1e-6 * s.w.norm());
}

TEST_CASE("data-fit term does not increase with k") {
  std::mt19937_64 rng(21);
  const GridSpec g = GridSpec::unit_square(6, 7);
  const auto A = random_map(g, 30, rng);
  const auto S = BttbOperator::matern(g, MaternSpec{1.0, 0.25, 0.5});
  const Eigen::VectorXd b = randn(30, rng);
  const Eigen::MatrixXd Sd = dense_from_first_column(g, S.first_col());
  const Eigen::VectorXd ref = dense_xhat(Sd, A.to_dense(), b, 2.0, 0.2);
  double prev = std::numeric_limits<double>::infinity();
  Eigen::VectorXd last;
  for (std::size_t k = 1; k <= 42; ++k) {
    GenGKOptions o;
    o.k = k;
    o.reorthogonalize = true;
    const auto s = solve(gengk_factorize(A, S, b, 0.2, o), 2.0, A);
    const double fit = s.psi_star.squaredNorm();
    CAPTURE(k);
    CHECK(fit <= prev * (1.0 + 1e-10) + 1e-12);
    prev = fit;
    last = s.x_star;
  }
  CHECK((last - ref).norm() <= 1e-6 * ref.norm());
}

TEST_CASE("bit-identical reruns") {
  std::mt19937_64 rng(2);
  const GridSpec g = GridSpec::unit_square(8, 8);
  const auto A = random_map(g, 40, rng);
  const auto S = BttbOperator::matern(g, MaternSpec{1.0, 0.2, 0.5});
  const Eigen::VectorXd b = randn(40, rng);
  const auto a = solve(gengk_factorize(A, S, b, 0.4), 1.5, A);
  const auto c = solve(gengk_factorize(A, S, b, 0.4), 1.5, A);
  CHECK(a.x_star == c.x_star);
  CHECK(a.quad == c.quad);
}
