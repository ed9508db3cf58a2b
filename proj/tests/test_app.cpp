#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "kryging/app/artifact.hpp"
#include "kryging/app/config.hpp"
#include "kryging/app/dataset.hpp"
#include "kryging/app/simulate.hpp"
#include "kryging/app/study.hpp"

using namespace kryging;
using namespace kryging::app;

namespace {

Dataset parse(const std::string& text, const CsvOptions& o = {}) {
  std::istringstream in(text);
  return parse_csv(in, o, "t.csv");
}

std::string error_of(const std::string& text, const CsvOptions& o = {}) {
  try {
    parse(text, o);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("csv parsing builds the design matrix") {
  const Dataset d = parse("LON,lat,y,elev,slope\n0.1,0.2,3,10,1\n0.3,0.4,5,20,2\n");
  REQUIRE(d.size() == 2);
  CHECK(d.y[1] == 5.0);
  REQUIRE(d.X.cols() == 3);
  CHECK(d.X(0, 0) == 1.0);
  CHECK(d.X(1, 1) == 20.0);
  CHECK(d.X(1, 2) == 2.0);
  CHECK(d.covariate_names == std::vector<std::string>{"(intercept)", "elev", "slope"});

  CsvOptions o;
  o.covariates = {"slope"};
  o.intercept = false;
  const Dataset e = parse("lon,lat,y,elev,slope\n0,0,1,9,7\n", o);
  REQUIRE(e.X.cols() == 1);
  CHECK(e.X(0, 0) == 7.0);

  CsvOptions none;
  none.all_covariates = false;
  CHECK(parse("lon,lat,y,elev\n0,0,1,9\n", none).X.cols() == 1);
}

TEST_CASE("csv errors name the source and line") {
  CHECK(error_of("") == "t.csv: no observations");
  CHECK(error_of("lon,lat,y\n") == "t.csv: no observations");
  CHECK(error_of("lon,lat,y\n0,0,1\n0,x,2\n").find("t.csv:3:") == 0);
  CHECK(error_of("lon,lat,y\n0,0\n").find("t.csv:2:") == 0);
  CHECK(error_of("lon,lat,y\n0,0,inf\n").find("t.csv:2:") == 0);
  CHECK(error_of("x,lat,y\n0,0,1\n").find("'lon'") != std::string::npos);
  CsvOptions o;
  o.covariates = {"elev"};
  CHECK(error_of("lon,lat,y\n0,0,1\n", o) ==
        "t.csv: covariate column 'elev' not found in header");

  CsvOptions skip;
  skip.skip_missing_response = true;
  CHECK(parse("lon,lat,y\n0,0,NA\n1,1,2\n", skip).size() == 1);
  CHECK(error_of("lon,lat,y\n0,0,NA\n1,1,2\n").find("t.csv:2:") == 0);
}

TEST_CASE("csv round trip is exact") {
  const Dataset d = parse("lon,lat,y,elev\n0.1,0.2,3.000000000000001,1e-300\n-5,7,0.3,2\n");
  std::ostringstream out;
  write_csv(out, d);
  const Dataset e = parse(out.str());
  CHECK(e.y == d.y);
  CHECK(e.X == d.X);
  CHECK(e.locations[0].x == d.locations[0].x);
}

TEST_CASE("grid sizes, extents and coverage") {
  CHECK(parse_grid_size("100x80") == std::pair<std::size_t, std::size_t>{100, 80});
  CHECK_THROWS_AS(parse_grid_size("100"), InputError);
  CHECK_THROWS_AS(parse_grid_size("1x5"), InputError);
  CHECK_THROWS_AS(parse_grid_size("ax5"), InputError);

  const std::vector<Location> locs{{1.0, 2.0}, {3.0, 2.5}, {2.0, 4.0}};
  const GridSpec g = resolve_grid("11x7", "auto", locs);
  // spacing (max - min) / (n - 3); one spacing beyond the bounding box
  CHECK(g.dx() == doctest::Approx(2.0 / 8));
  CHECK(g.x_min() == doctest::Approx(1.0 - 0.25));
  CHECK(g.x_max() == doctest::Approx(3.0 + 0.25));
  CHECK(g.dy() == doctest::Approx(2.0 / 4));
  CHECK(g.y_min() == doctest::Approx(1.5));
  check_coverage(locs, g, "t");

  const GridSpec fixed = resolve_grid("5x5", "0,2,0,3", locs);
  CHECK(fixed.x_max() == 2.0);
  try {
    check_coverage(locs, fixed, "t.csv");
    FAIL("expected a coverage error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("rows 2, 3") != std::string::npos);
  }
  CHECK_THROWS_AS(resolve_grid("5x5", "0,1,0", locs), InputError);
  CHECK_THROWS_AS(resolve_grid("3x5", "auto", locs), InputError);
}

TEST_CASE("init strings parse into starting points") {
  CHECK(parse_init("auto", 2).empty());
  const auto s = parse_init("1,2,3,0.5,0.1; 0,0,1,1,0.2", 2);
  REQUIRE(s.size() == 2);
  CHECK(s[0].beta == Eigen::Vector2d(1, 2));
  CHECK(s[0].sigma2 == 3.0);
  CHECK(s[1].rho == 0.2);
  CHECK_THROWS_AS(parse_init("1,2,3", 2), InputError);
  CHECK_THROWS_AS(parse_init("1,-2,3,0.1", 1), InputError);
}

TEST_CASE("run config validates and maps onto fit options") {
  RunConfig c;
  c.validate();
  c.hessian = "full";
  c.init = "1,2,3,0.4";
  const FitOptions f = c.fit_options(1);
  CHECK(f.hessian == HessianModel::full_approx);
  CHECK(f.starts.size() == 1);
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c.k = 5;
  c.B = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c.B = 5;
  c.hessian = "bfgs";
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("config files become long-flag arguments") {
  const auto path = std::filesystem::temp_directory_path() / "kryging_cfg_test.cfg";
  {
    std::ofstream f(path);
    f << "# settings\nk = 80\n\ngrid=50x40   # trailing\ninit = 1,2,3,0.1;4,5,6,0.2\n";
  }
  CHECK(config_file_args(path.string()) ==
        std::vector<std::string>{"--k=80", "--grid=50x40", "--init=1,2,3,0.1;4,5,6,0.2"});
  {
    std::ofstream f(path);
    f << "k 80\n";
  }
  CHECK_THROWS_AS(config_file_args(path.string()), InputError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(config_file_args(path.string()), InputError);
}

TEST_CASE("fit artifacts round trip exactly") {
  FitArtifact a;
  a.grid = GridSpec(6, 5, -1.0, 2.0, 0.5, 1.5);
  a.nu = 1.5;
  a.theta = ThetaParams{Eigen::Vector2d(0.1, 1.0 / 3.0), 2.5, 0.25, 0.123456789};
  a.x_hat = Eigen::VectorXd::LinSpaced(30, -1.0, 1.0 / 7.0);
  a.k = 17;
  a.reorthogonalize = true;
  a.embedding.max_clamp_fraction = 0.01;
  a.train = parse("lon,lat,y,elev\n0.1,0.7,3,0.2\n1.9,1.2,-4,0.9\n");
  a.diagnostics.objective = -12.5;
  a.diagnostics.objective_trace = {1.0, 0.5, -12.5};
  a.diagnostics.stop_reason = "gradient";
  a.diagnostics.converged = true;
  a.diagnostics.k_effective = 9;

  std::stringstream io;
  write_artifact(io, a);
  const FitArtifact b = read_artifact(io);
  CHECK(b.grid == a.grid);
  CHECK(b.nu == a.nu);
  CHECK(b.theta.beta == a.theta.beta);
  CHECK(b.theta.rho == a.theta.rho);
  CHECK(b.x_hat == a.x_hat);
  CHECK(b.k == 17);
  CHECK(b.reorthogonalize);
  CHECK(b.embedding.max_clamp_fraction == 0.01);
  CHECK(b.train.X == a.train.X);
  CHECK(b.train.y == a.train.y);
  CHECK(b.train.covariate_names == a.train.covariate_names);
  CHECK(b.diagnostics.objective_trace == a.diagnostics.objective_trace);
  CHECK(b.diagnostics.stop_reason == "gradient");
  CHECK(b.diagnostics.k_effective == 9);
  CHECK(b.model().A.rows() == 2);

  std::istringstream bad("{\"format\":\"kryging-fit\",\"version\":99}");
  CHECK_THROWS_AS(read_artifact(bad), InputError);
  std::istringstream junk("not json");
  CHECK_THROWS_AS(read_artifact(junk), InputError);
  std::string text = io.str();
  text.replace(text.find("\"x_hat\":["), 9, "\"x_hat\":[0,");
  std::istringstream longer(text);
  CHECK_THROWS_AS(read_artifact(longer), InputError);
}

TEST_CASE("simulation is reproducible and splits the kept nodes") {
  SimulationSpec s;
  s.grid = GridSpec::unit_square(20, 20);
  s.seed = 5;
  const Simulation a = simulate(s), b = simulate(s);
  CHECK(a.train.y == b.train.y);
  CHECK(a.test.y == b.test.y);
  CHECK(a.train.size() == 380);
  CHECK(a.test.size() == 20);
  s.seed = 6;
  CHECK(simulate(s).train.y != a.train.y);

  std::vector<std::size_t> all = a.train_nodes;
  all.insert(all.end(), a.test_nodes.begin(), a.test_nodes.end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());

  s.keep = 0.25;
  s.holdout = 0.0;
  CHECK(simulate(s).train.size() == 100);
  s.keep = 0.0;
  CHECK_THROWS_AS(simulate(s), InputError);
}

TEST_CASE("simulated means agree with the generating mean") {
  SimulationSpec s;
  s.grid = GridSpec::unit_square(400, 400);
  s.holdout = 0.0;
  const Simulation sim = simulate(s);
  const double n = static_cast<double>(s.grid.size());
  // Var(mean y) = sigma2 1' Sigma 1 / n^2 + tau2 / n
  const auto op = BttbOperator::matern(s.grid, MaternSpec{1.0, s.theta.rho, s.nu});
  const double ones =
      op.apply(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s.grid.size()))).sum();
  const double se = std::sqrt(s.theta.sigma2 * ones / (n * n) + s.theta.tau2 / n);
  CHECK(std::abs(sim.train.y.mean() - 44.49) < 3.0 * se);
}

TEST_CASE("thinning a 1000 x 1000 lattice to 4% leaves 40,000 rows") {
  SimulationSpec s;
  s.grid = GridSpec::unit_square(1000, 1000);
  s.keep = 0.04;
  s.holdout = 0.0;
  CHECK(simulate(s).train.size() == 40000);
}

TEST_CASE("prediction scores match closed forms") {
  PredictionSet p;
  p.y_hat = Eigen::Vector2d(0.0, 1.0);
  p.se = Eigen::Vector2d(1.0, 2.0);
  p.ci_lo = p.y_hat - 1.96 * p.se;
  p.ci_hi = p.y_hat + 1.96 * p.se;
  const Eigen::Vector2d y(0.0, 6.0);
  const Scores s = score_predictions(y, p);
  CHECK(s.mae == doctest::Approx(2.5));
  CHECK(s.rmse == doctest::Approx(std::sqrt(12.5)));
  CHECK(s.coverage == doctest::Approx(0.5));
  // CRPS of N(0, 1) at 0 is 2 phi(0) - 1/sqrt(pi)
  const double c0 = 2.0 / std::sqrt(2.0 * std::numbers::pi) - 1.0 / std::sqrt(std::numbers::pi);
  const double z = 2.5, phi = std::exp(-z * z / 2) / std::sqrt(2 * std::numbers::pi);
  const double Phi = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double c1 = 2.0 * (z * (2 * Phi - 1) + 2 * phi - 1 / std::sqrt(std::numbers::pi));
  CHECK(s.crps == doctest::Approx((c0 + c1) / 2));
  const double int0 = 2 * 1.96, int1 = 4 * 1.96 + 40.0 * (6.0 - (1.0 + 3.92));
  CHECK(s.interval == doctest::Approx((int0 + int1) / 2));
}

TEST_CASE("study summaries report means, SEs and parameter RMSE") {
  CaseResult c;
  c.design.truth = ThetaParams{Eigen::VectorXd::Constant(1, 1.0), 2.0, 0.5, 0.1};
  c.k = 50;
  for (double r : {0.8, 1.0, 1.2}) {
    ReplicateOutcome o;
    o.rmse = r;
    o.coverage = 0.9;
    o.total_seconds = 60.0 * r;
    o.theta_hat = c.design.truth;
    o.theta_hat.sigma2 = 2.0 + (r - 1.0) * 10.0;  // errors -2, 0, 2
    c.reps.push_back(o);
  }
  const CaseSummary s = summarize(c);
  CHECK(s.rmse == doctest::Approx(1.0));
  CHECK(s.rmse_se == doctest::Approx(0.2 / std::sqrt(3.0)));
  CHECK(s.coverage == doctest::Approx(0.9));
  CHECK(s.coverage_se == doctest::Approx(0.0));
  CHECK(s.median_minutes == doctest::Approx(1.0));
  CHECK(s.param_rmse[1] == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(s.param_rmse[0] == 0.0);
  CHECK(study_designs("settings", 0.5).size() == 4);
  CHECK(study_designs("settings", 0.5)[0].source.n1() == 100);
  CHECK(study_designs("irregular", 0.25)[2].latent.n1() == 100);
  CHECK_THROWS_AS(study_designs("nope", 1.0), InputError);
}

TEST_CASE("a small study runs end to end and is reproducible") {
  StudyConfig cfg;
  cfg.replicates = 2;
  cfg.scale = 0.1;
  cfg.ks = {20};
  cfg.B = 3;
  cfg.fit.max_iter = 5;
  cfg.workers = 2;
  const auto a = run_study("grid-scaling", cfg);
  cfg.workers = 1;
  const auto b = run_study("grid-scaling", cfg);
  REQUIRE(a.size() == 4);
  CHECK(a[0].design.source.n1() == 10);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(a[i].reps[r].rmse == b[i].reps[r].rmse);
      CHECK(a[i].reps[r].coverage == b[i].reps[r].coverage);
      CHECK(a[i].reps[r].rmse > 0.0);
    }
  CHECK(a[0].reps[0].rmse != a[0].reps[1].rmse);
  std::ostringstream out;
  write_study_tables(out, a);
  CHECK(out.str().find("RMSE_CVG") != std::string::npos);
  CHECK(out.str().find("sigma2") != std::string::npos);
}
