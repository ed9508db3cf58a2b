#ifndef KRYGING_APP_STUDY_HPP
#define KRYGING_APP_STUDY_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kryging/app/dataset.hpp"
#include "kryging/estimation.hpp"

namespace kryging::app {

struct StudyConfig {
  std::size_t replicates = 5;
  double scale = 1.0;  // multiplies every grid side
  std::uint64_t seed = 1;
  std::vector<std::size_t> ks{50};
  std::size_t B = 20;
  double holdout = 0.05;
  FitOptions fit;
  std::size_t workers = 0;  // concurrent replicates; 0: hardware concurrency
  std::size_t threads = 1;  // bootstrap workers inside each replicate
};

/// One simulated dataset scored on its holdout.
struct ReplicateDesign {
  std::string label;
  GridSpec source = GridSpec::unit_square(100, 100);
  GridSpec latent = GridSpec::unit_square(100, 100);
  ThetaParams truth{Eigen::VectorXd::Constant(1, 44.49), 3.0, 0.5, 0.1};
  double keep = 1.0;
};

struct ReplicateOutcome {
  double rmse = 0.0;
  double coverage = 0.0;
  double fit_seconds = 0.0;
  double total_seconds = 0.0;
  ThetaParams theta_hat;
  std::size_t iterations = 0;
  std::size_t train_size = 0, test_size = 0;
  bool converged = false;
};

struct Scores {
  double rmse = 0.0, mae = 0.0, crps = 0.0, interval = 0.0, coverage = 0.0;
};

/// Point and interval scores of Gaussian predictive distributions
/// N(y_hat, se^2) with 95% intervals.
Scores score_predictions(const Eigen::VectorXd& y, const PredictionSet& pred);

/// Fits on `train`, bootstraps at the `test` locations and scores them.
ReplicateOutcome fit_and_score(const Dataset& train, const Dataset& test,
                               const GridSpec& latent, std::size_t k,
                               const StudyConfig& cfg, std::uint64_t seed,
                               PredictionSet* pred_out = nullptr);

ReplicateOutcome run_replicate(const ReplicateDesign& design, std::size_t k,
                               const StudyConfig& cfg, std::size_t replicate);

struct CaseResult {
  ReplicateDesign design;
  std::size_t k = 0;
  std::vector<ReplicateOutcome> reps;
};

struct CaseSummary {
  std::string label;
  std::size_t k = 0;
  double rmse = 0.0, rmse_se = 0.0;
  double coverage = 0.0, coverage_se = 0.0;
  double median_minutes = 0.0;
  // RMSE of (beta, sigma2, tau2, rho) against the truth, with standard errors
  // of the mean squared error propagated to the root.
  double param_rmse[4] = {}, param_rmse_se[4] = {};
};

CaseSummary summarize(const CaseResult& c);

/// Study designs: "grid-scaling", "settings", "irregular".
std::vector<ReplicateDesign> study_designs(const std::string& id, double scale);

std::vector<CaseResult> run_study(const std::string& id, const StudyConfig& cfg,
                                  std::ostream* log = nullptr);

/// Fits on real train/test splits. With several starts and cv_folds >= 2 the
/// start is chosen by K-fold cross-validated RMSE on the training set;
/// otherwise the best final objective wins.
struct ModisOptions {
  std::size_t k = 200;
  std::size_t cv_folds = 0;
  std::uint64_t cv_seed = 1;
};

struct ModisResult {
  Scores scores;
  FitResult fit;
  PredictionSet prediction;
  std::vector<double> cv_rmse;  // per start, when cross-validation ran
  std::size_t chosen_start = 0;
};

ModisResult run_modis(const Dataset& train, const Dataset& test,
                      const GridSpec& latent, const ModisOptions& mo,
                      const StudyConfig& cfg);

void write_scores(std::ostream& out, const Scores& s);

/// Prediction table (RMSE_coverage and SE), timing table and parameter table.
void write_study_tables(std::ostream& out, const std::vector<CaseResult>& cases);

}  // namespace kryging::app

#endif  // KRYGING_APP_STUDY_HPP
