#include <cmath>
#include <limits>

#include "doctest.h"
#include "kryging/grid_cov.hpp"

using namespace kryging;

TEST_CASE("grid spec invariants") {
  const GridSpec g(4, 3, 0.0, 3.0, 1.0, 2.0);
  CHECK(g.size() == 12);
  CHECK(g.dx() == doctest::Approx(1.0));
  CHECK(g.dy() == doctest::Approx(0.5));
  CHECK(g.index(1, 2) == 9);
  CHECK(g.node_y(2) == doctest::Approx(2.0));
  CHECK_THROWS_AS(GridSpec(1, 3, 0, 1, 0, 1), InputError);
  CHECK_THROWS_AS(GridSpec(3, 3, 1, 1, 0, 1), InputError);
  CHECK_THROWS_AS(GridSpec(3, 3, 0, 1, 0, -1), InputError);
}

TEST_CASE("theta precision round trip") {
  ThetaParams t{Eigen::VectorXd::Constant(1, 2.0), 3.0, 0.5, 0.1};
  const auto u = ThetaParams::from_precisions(t.beta, t.lambda2(), t.lambda_e2(),
                                              t.rho);
  CHECK(u.sigma2 == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(u.tau2 == doctest::Approx(0.5).epsilon(1e-15));
  t.tau2 = 0.0;
  CHECK_THROWS_AS(t.validate(), InputError);
}

TEST_CASE("matern closed forms") {
  CHECK(matern_corr(0.0, 0.3, 0.5) == 1.0);
  CHECK(matern_corr(0.0, 0.3, 1.7) == 1.0);
  CHECK(matern_corr(0.1, 0.1, 0.5) == doctest::Approx(std::exp(-1.0)));
  CHECK(matern_corr_drho(0.0, 0.1, 0.5) == 0.0);
  CHECK(matern_corr_drho(0.1, 0.1, 0.5) ==
        doctest::Approx(10.0 * std::exp(-1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(matern_corr(-1.0, 0.1, 0.5), InputError);
  CHECK_THROWS_AS(matern_corr(0.1, 0.0, 0.5), InputError);
  CHECK_THROWS_AS(matern_corr(std::numeric_limits<double>::quiet_NaN(), 0.1,
                              0.5),
                  InputError);
}

TEST_CASE("matern against high-precision Bessel values") {
  // mpmath, 40 digits
  CHECK(matern_corr(0.2, 0.1, 1.5) ==
        doctest::Approx(0.13973135019231467094).epsilon(1e-13));
  CHECK(matern_corr(0.2, 0.1, 0.7) ==
        doctest::Approx(0.13828069713920702199).epsilon(1e-10));
  CHECK(matern_corr(0.05, 0.3, 2.5) ==
        doctest::Approx(0.97751297374724403774).epsilon(1e-13));
  CHECK(matern_corr(0.13, 0.1, 1.2) ==
        doctest::Approx(0.32962303211389365712).epsilon(1e-10));
  CHECK(matern_corr_drho(0.13, 0.1, 1.2) ==
        doctest::Approx(4.9936952490600628092).epsilon(1e-7));
  CHECK(matern_corr_d2rho(0.13, 0.1, 1.2) ==
        doctest::Approx(-36.090536642646879826).epsilon(1e-5));
}

TEST_CASE("rho derivatives match central differences") {
  for (double nu : {0.5, 1.5, 2.5, 0.8}) {
    for (double d : {0.01, 0.05, 0.2, 0.6}) {
      const double rho = 0.15, h = 1e-6 * rho;
      const double fd =
          (matern_corr(d, rho + h, nu) - matern_corr(d, rho - h, nu)) / (2 * h);
      CAPTURE(nu);
      CAPTURE(d);
      CHECK(matern_corr_drho(d, rho, nu) == doctest::Approx(fd).epsilon(1e-5));
      const double fd2 = (matern_corr_drho(d, rho + h, nu) -
                          matern_corr_drho(d, rho - h, nu)) /
                         (2 * h);
      CHECK(matern_corr_d2rho(d, rho, nu) ==
            doctest::Approx(fd2).epsilon(1e-4));
    }
  }
}

TEST_CASE("matern decays strictly") {
  for (double nu : {0.5, 1.5, 2.5, 1.1}) {
    double prev = matern_corr(0.0, 0.2, nu);
    for (int i = 1; i <= 200; ++i) {
      const double v = matern_corr(0.005 * i, 0.2, nu);
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("first column on a two-node row") {
  // Smallest valid lattice is 2x2; its first two entries are the 1x2 case.
  const GridSpec g(2, 2, 0.0, 0.3, 0.0, 1.0);
  const auto col = first_column(g, MaternSpec{2.0, 0.2, 0.5});
  CHECK(col[0] == doctest::Approx(2.0));
  CHECK(col[1] == doctest::Approx(2.0 * std::exp(-0.3 / 0.2)));
}

TEST_CASE("dense BTTB from first column equals pairwise covariance") {
  const GridSpec g(3, 4, 0.0, 1.0, -1.0, 0.5);
  const MaternSpec spec{1.3, 0.4, 1.5};
  const auto col = first_column(g, spec);
  const auto S = dense_from_first_column(g, col);
  for (std::size_t a2 = 0; a2 < g.n2(); ++a2)
    for (std::size_t a1 = 0; a1 < g.n1(); ++a1)
      for (std::size_t b2 = 0; b2 < g.n2(); ++b2)
        for (std::size_t b1 = 0; b1 < g.n1(); ++b1) {
          const double d = std::hypot(g.node_x(a1) - g.node_x(b1),
                                      g.node_y(a2) - g.node_y(b2));
          CHECK(S(g.index(a1, a2), g.index(b1, b2)) ==
                doctest::Approx(1.3 * matern_corr(d, 0.4, 1.5)));
        }
  CHECK((S - S.transpose()).norm() == 0.0);
  CHECK(col.maxCoeff() <= 1.3);
}

TEST_CASE("correlation column bounds and positive definiteness") {
  const GridSpec g = GridSpec::unit_square(12, 10);
  for (double nu : {0.5, 1.5, 2.5}) {
    const auto col = first_column(g, MaternSpec{1.0, 0.2, nu});
    CHECK(col.minCoeff() > 0.0);
    CHECK(col.maxCoeff() <= 1.0);
    Eigen::LLT<Eigen::MatrixXd> llt(dense_from_first_column(g, col));
    CHECK(llt.info() == Eigen::Success);
  }
}
