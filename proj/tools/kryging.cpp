// kryging: fit, predict, simulate, bootstrap and study subcommands.
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kryging/app/artifact.hpp"
#include "kryging/app/config.hpp"
#include "kryging/app/dataset.hpp"
#include "kryging/app/simulate.hpp"
#include "kryging/app/study.hpp"

namespace {

using namespace kryging;
using namespace kryging::app;

constexpr int kInputError = 2;
constexpr int kNumericalError = 3;

struct DataOptions {
  std::string covariates;  // comma-separated
  bool no_intercept = false;
  std::string response = "y";
};

CsvOptions csv_options(const DataOptions& d) {
  CsvOptions o;
  o.intercept = !d.no_intercept;
  o.response = d.response;
  std::stringstream ss(d.covariates);
  for (std::string c; std::getline(ss, c, ',');)
    if (!c.empty()) o.covariates.push_back(c);
  return o;
}

void add_data_options(CLI::App* sub, DataOptions& d) {
  sub->add_option("--covariates", d.covariates,
                  "Comma-separated covariate columns (default: all extra columns)");
  sub->add_flag("--no-intercept", d.no_intercept, "Do not add an intercept column");
  sub->add_option("--response", d.response, "Response column name")->capture_default_str();
}

void add_grid_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--grid", c.grid, "Latent grid size N1xN2")->capture_default_str();
  sub->add_option("--extent", c.extent,
                  "Grid extent: auto (bounding box plus one spacing) or x0,x1,y0,y1")
      ->capture_default_str();
}

void add_fit_options(CLI::App* sub, RunConfig& c, bool with_k = true) {
  sub->add_option("--nu", c.nu, "Matern smoothness (fixed)")->capture_default_str();
  if (with_k) sub->add_option("--k", c.k, "Krylov iterations")->capture_default_str();
  sub->add_option("--init", c.init,
                  "auto, or starts 'beta...,sigma2,tau2,rho' separated by ';'")
      ->capture_default_str();
  sub->add_option("--tol", c.tol, "Optimizer tolerance")->capture_default_str();
  sub->add_option("--max-iter", c.max_iter, "Optimizer iteration cap")->capture_default_str();
  sub->add_option("--hessian", c.hessian, "Trust-region model: rank-one or full")
      ->capture_default_str();
  sub->add_flag("--reorthogonalize", c.reorthogonalize,
                "Reorthogonalize the Krylov bases");
  sub->add_option("--clamp-floor", c.clamp_floor,
                  "Relative floor for embedding eigenvalues")->capture_default_str();
  sub->add_option("--max-clamp-fraction", c.max_clamp_fraction,
                  "Fail when more embedding eigenvalues than this are clamped")
      ->capture_default_str();
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw InputError("cannot write '" + path + "'");
  return file;
}

void write_predictions(std::ostream& out, const PredictionSet& p, bool with_se) {
  out << (with_se ? "lon,lat,y_hat,se,ci_lo,ci_hi\n" : "lon,lat,y_hat\n");
  out << std::setprecision(17);
  for (std::size_t i = 0; i < p.locations.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << p.locations[i].x << ',' << p.locations[i].y << ',' << p.y_hat[r];
    if (with_se) out << ',' << p.se[r] << ',' << p.ci_lo[r] << ',' << p.ci_hi[r];
    out << '\n';
  }
}

void write_report(std::ostream& out, const FitArtifact& a, std::size_t p) {
  const auto& d = a.diagnostics;
  out << "observations      " << p << "\n"
      << "grid              " << a.grid.n1() << "x" << a.grid.n2() << " on ["
      << a.grid.x_min() << ", " << a.grid.x_max() << "] x [" << a.grid.y_min()
      << ", " << a.grid.y_max() << "]\n"
      << "theta_hat         " << a.theta.to_string() << "\n"
      << "objective         " << std::setprecision(10) << d.objective
      << std::setprecision(6) << "\n"
      << "gradient inf-norm " << d.grad_norm << "\n"
      << "converged         " << (d.converged ? "yes" : "no") << " ("
      << d.stop_reason << ")\n"
      << "iterations        " << d.iterations << " (" << d.evaluations
      << " evaluations)\n"
      << "effective k       " << d.k_effective << " of " << a.k << "\n"
      << "clamp_count       " << d.clamp_count << "\n"
      << "wall time         " << std::fixed << std::setprecision(2)
      << d.wall_seconds << " s\n"
      << std::defaultfloat << std::setprecision(6) << "objective trace\n";
  for (std::size_t i = 0; i < d.objective_trace.size(); ++i)
    out << "  " << std::setw(4) << i << "  " << std::setprecision(10)
        << d.objective_trace[i] << std::setprecision(6) << '\n';
}

int cmd_fit(const std::string& data_path, const DataOptions& dopt,
            const RunConfig& cfg, const std::string& report_path) {
  cfg.validate();
  if (cfg.out.empty()) throw InputError("fit: --out is required");
  const Dataset train = read_csv(data_path, csv_options(dopt));
  const GridSpec grid = resolve_grid(cfg.grid, cfg.extent, train.locations);
  check_coverage(train.locations, grid, data_path);
  ModelData data{grid, build_map(train.locations, grid), train.y, train.X, cfg.nu};
  const FitResult fr = fit(data, cfg.fit_options(train.X.cols()));

  FitArtifact a{grid, cfg.nu, fr.theta_hat, fr.x_hat, cfg.k,
                cfg.reorthogonalize, cfg.embedding(), train, fr};
  write_artifact(cfg.out, a);
  std::ofstream file;
  write_report(open_out(report_path, file), a, train.size());
  return 0;
}

Dataset read_targets(const std::string& path, const FitArtifact& a) {
  CsvOptions o;
  o.intercept = a.train.intercept;
  o.require_response = false;
  o.allow_empty = true;
  o.all_covariates = false;
  for (std::size_t j = a.train.intercept ? 1 : 0; j < a.train.covariate_names.size(); ++j)
    o.covariates.push_back(a.train.covariate_names[j]);
  const Dataset d = read_csv(path, o);
  check_coverage(d.locations, a.grid, path);
  return d;
}

int cmd_predict(const std::string& artifact_path, const std::string& loc_path,
                std::size_t B, std::uint64_t seed, std::size_t threads,
                const std::string& out_path) {
  const FitArtifact a = read_artifact(artifact_path);
  const Dataset target = read_targets(loc_path, a);
  const SparseMap A_pred = build_map(target.locations, a.grid);
  PredictionSet pred;
  if (B > 0) {
    BootstrapOptions bo;
    bo.B = B;
    bo.seed = seed;
    bo.k = a.k;
    bo.reorthogonalize = a.reorthogonalize;
    bo.embedding = a.embedding;
    bo.threads = threads;
    pred = bootstrap_uq(a.model(), a.theta, a.x_hat, target.locations, A_pred,
                        target.X, bo);
  } else {
    pred.locations = target.locations;
    pred.y_hat = predict(a.theta, a.x_hat, A_pred, target.X);
  }
  std::ofstream file;
  write_predictions(open_out(out_path, file), pred, B > 0);
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const std::string& theta, double keep,
                 double holdout) {
  if (cfg.out.empty()) throw InputError("simulate: --out is required");
  SimulationSpec spec;
  const auto [n1, n2] = parse_grid_size(cfg.grid);
  const auto ext = parse_doubles(cfg.extent == "auto" ? "0,1,0,1" : cfg.extent);
  if (ext.size() != 4) throw InputError("extent must be x0,x1,y0,y1");
  spec.grid = GridSpec(n1, n2, ext[0], ext[1], ext[2], ext[3]);
  const auto starts = parse_init(theta, 1);
  spec.theta = starts.at(0);
  spec.nu = cfg.nu;
  spec.keep = keep;
  spec.holdout = holdout;
  spec.seed = cfg.seed;
  spec.embedding = cfg.embedding();
  const Simulation sim = simulate(spec);

  const std::filesystem::path out(cfg.out);
  const auto stem = (out.parent_path() / out.stem()).string();
  write_csv(out.string(), sim.train);
  write_csv(stem + "_test.csv", sim.test);
  nlohmann::json j;
  j["grid"] = {{"n1", n1}, {"n2", n2}, {"x_min", ext[0]}, {"x_max", ext[1]},
               {"y_min", ext[2]}, {"y_max", ext[3]}};
  j["theta"] = {{"beta", spec.theta.beta[0]}, {"sigma2", spec.theta.sigma2},
                {"tau2", spec.theta.tau2}, {"rho", spec.theta.rho}};
  j["nu"] = spec.nu;
  j["seed"] = spec.seed;
  j["keep"] = keep;
  j["holdout"] = holdout;
  j["train_rows"] = sim.train.size();
  j["test_rows"] = sim.test.size();
  j["x_true"] = std::vector<double>(sim.x_true.data(), sim.x_true.data() + sim.x_true.size());
  std::ofstream tf(stem + "_truth.json");
  if (!tf) throw InputError("cannot write '" + stem + "_truth.json'");
  tf << j.dump() << '\n';
  std::cout << "wrote " << sim.train.size() << " training rows to " << out.string()
            << ", " << sim.test.size() << " test rows to " << stem << "_test.csv\n";
  return 0;
}

struct StudyArgs {
  std::string id;
  double scale = 1.0;
  std::size_t replicates = 5;
  std::string ks = "50";
  std::size_t workers = 0;
  double holdout = 0.05;
  std::string train, test;
  std::size_t cv_folds = 0;
  std::uint64_t cv_seed = 1;
};

int cmd_study(const StudyArgs& s, const DataOptions& dopt, const RunConfig& cfg) {
  cfg.validate();
  StudyConfig sc;
  sc.replicates = s.replicates;
  sc.scale = s.scale;
  sc.seed = cfg.seed;
  sc.B = cfg.B;
  sc.holdout = s.holdout;
  sc.workers = s.workers;
  sc.threads = cfg.threads ? cfg.threads : 1;
  sc.ks.clear();
  for (double k : parse_doubles(s.ks)) {
    if (!(k >= 1.0) || k != std::floor(k)) throw InputError("k values must be positive integers");
    sc.ks.push_back(static_cast<std::size_t>(k));
  }
  std::ofstream file;
  std::ostream& out = open_out(cfg.out, file);

  if (s.id == "modis") {
    if (s.train.empty() || s.test.empty())
      throw InputError("study modis: --train and --test are required");
    CsvOptions co = csv_options(dopt);
    co.skip_missing_response = true;
    const Dataset train = read_csv(s.train, co);
    co.covariates.assign(train.covariate_names.begin() + (train.intercept ? 1 : 0),
                         train.covariate_names.end());
    co.all_covariates = false;
    const Dataset test = read_csv(s.test, co);
    std::vector<Location> all = train.locations;
    all.insert(all.end(), test.locations.begin(), test.locations.end());
    const GridSpec grid = resolve_grid(cfg.grid, cfg.extent, all);
    sc.fit = cfg.fit_options(train.X.cols());
    ModisOptions mo;
    mo.k = sc.ks.front();
    mo.cv_folds = s.cv_folds;
    mo.cv_seed = s.cv_seed;
    const ModisResult r = run_modis(train, test, grid, mo, sc);
    out << "train " << train.size() << ", test " << test.size() << ", grid "
        << grid.n1() << "x" << grid.n2() << ", k " << mo.k << "\n";
    out << "theta_hat " << r.fit.theta_hat.to_string() << "\n";
    for (std::size_t i = 0; i < r.cv_rmse.size(); ++i)
      out << "start " << i << " cv rmse " << r.cv_rmse[i] << "\n";
    out << "chosen start " << r.chosen_start << "\n";
    write_scores(out, r.scores);
    return 0;
  }

  sc.fit = cfg.fit_options(1);
  const auto cases = run_study(s.id, sc, &std::cerr);
  write_study_tables(out, cases);
  return 0;
}

// Finds the --config value and returns its key=value pairs as arguments.
std::vector<std::string> config_args(const std::vector<std::string>& args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return config_file_args(args[i + 1]);
    if (args[i].rfind("--config=", 0) == 0) return config_file_args(args[i].substr(9));
  }
  return {};
}

int run(int argc, char** argv) {
  CLI::App app{"Kryging: Krylov-accelerated maximum likelihood kriging on lattices"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  RunConfig cfg;
  DataOptions dopt;
  std::string config_path, report_path, data_path, artifact_path, loc_path;
  std::string theta = "44.49,3,0.5,0.1";
  double keep = 1.0, holdout = 0.05;
  std::size_t predict_B = 0;
  StudyArgs sargs;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "Flat key = value file; keys are the long flag names, flags "
                    "on the command line take precedence");
  };

  auto* fit_cmd = app.add_subcommand("fit", "Estimate parameters and the latent field");
  fit_cmd->add_option("data", data_path, "Training CSV: lon,lat,y[,covariates]")->required();
  add_grid_options(fit_cmd, cfg);
  add_fit_options(fit_cmd, cfg);
  add_data_options(fit_cmd, dopt);
  fit_cmd->add_option("--out", cfg.out, "Fit artifact path (JSON)")->required();
  fit_cmd->add_option("--report", report_path, "Report path (default: stdout)");
  add_config(fit_cmd);

  auto* pred_cmd = app.add_subcommand("predict", "Predict at new locations from a fit artifact");
  pred_cmd->add_option("artifact", artifact_path, "Fit artifact")->required();
  pred_cmd->add_option("locations", loc_path, "CSV with lon,lat[,covariates]")->required();
  pred_cmd->add_option("--B", predict_B,
                       "Bootstrap replicates for se and intervals (0: point predictions)")
      ->capture_default_str();
  pred_cmd->add_option("--seed", cfg.seed, "Bootstrap seed")->capture_default_str();
  pred_cmd->add_option("--threads", cfg.threads, "Bootstrap threads (0: all cores)");
  pred_cmd->add_option("--out", cfg.out, "Predictions CSV (default: stdout)");
  add_config(pred_cmd);

  auto* boot_cmd = app.add_subcommand("bootstrap", "Bootstrap prediction uncertainty");
  boot_cmd->add_option("artifact", artifact_path, "Fit artifact")->required();
  boot_cmd->add_option("locations", loc_path, "CSV with lon,lat[,covariates]")->required();
  boot_cmd->add_option("--B", cfg.B, "Bootstrap replicates")->capture_default_str();
  boot_cmd->add_option("--seed", cfg.seed, "Bootstrap seed")->capture_default_str();
  boot_cmd->add_option("--threads", cfg.threads, "Bootstrap threads (0: all cores)");
  boot_cmd->add_option("--out", cfg.out, "Predictions CSV (default: stdout)");
  add_config(boot_cmd);

  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a dataset with a held-out test split");
  sim_cmd->add_option("--grid", cfg.grid, "Source lattice N1xN2")->capture_default_str();
  sim_cmd->add_option("--extent", cfg.extent, "Lattice extent x0,x1,y0,y1 (auto: unit square)")
      ->capture_default_str();
  sim_cmd->add_option("--theta", theta, "beta,sigma2,tau2,rho")->capture_default_str();
  sim_cmd->add_option("--nu", cfg.nu, "Matern smoothness")->capture_default_str();
  sim_cmd->add_option("--keep", keep, "Fraction of lattice nodes observed")->capture_default_str();
  sim_cmd->add_option("--holdout", holdout, "Fraction of observations held out")
      ->capture_default_str();
  sim_cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  sim_cmd->add_option("--out", cfg.out,
                      "Training CSV; writes <stem>_test.csv and <stem>_truth.json beside it")
      ->required();
  add_config(sim_cmd);

  auto* study_cmd = app.add_subcommand("study", "Run a simulation study or the MODIS evaluation");
  study_cmd->add_option("id", sargs.id, "grid-scaling | settings | irregular | modis")
      ->required()
      ->check(CLI::IsMember({"grid-scaling", "settings", "irregular", "modis"}));
  study_cmd->add_option("--scale", sargs.scale, "Grid side multiplier")->capture_default_str();
  study_cmd->add_option("--replicates", sargs.replicates, "Replicates per case")
      ->capture_default_str();
  study_cmd->add_option("--k", sargs.ks, "Comma-separated Krylov iteration counts")
      ->capture_default_str();
  study_cmd->add_option("--B", cfg.B, "Bootstrap replicates")->capture_default_str();
  study_cmd->add_option("--seed", cfg.seed, "Study seed")->capture_default_str();
  study_cmd->add_option("--workers", sargs.workers, "Concurrent replicates (0: all cores)");
  study_cmd->add_option("--threads", cfg.threads, "Bootstrap threads per replicate");
  study_cmd->add_option("--holdout", sargs.holdout, "Holdout fraction")->capture_default_str();
  add_grid_options(study_cmd, cfg);
  add_fit_options(study_cmd, cfg, false);
  add_data_options(study_cmd, dopt);
  study_cmd->add_option("--train", sargs.train, "modis: training CSV");
  study_cmd->add_option("--test", sargs.test, "modis: test CSV");
  study_cmd->add_option("--cv-folds", sargs.cv_folds,
                        "modis: choose among --init starts by K-fold CV (0: by objective)");
  study_cmd->add_option("--cv-seed", sargs.cv_seed, "modis: fold assignment seed");
  study_cmd->add_option("--out", cfg.out, "Results path (default: stdout)");
  add_config(study_cmd);

  // Config-file arguments go right after the subcommand so that explicit
  // flags, which come later, win under the take-last policy.
  std::vector<std::string> args(argv, argv + argc);
  const auto extra = config_args(args);
  if (!extra.empty()) {
    auto sub = std::find_if(args.begin() + 1, args.end(),
                            [](const std::string& a) { return a.empty() || a[0] != '-'; });
    if (sub != args.end()) args.insert(sub + 1, extra.begin(), extra.end());
  }
  std::reverse(args.begin(), args.end());
  args.pop_back();  // program name
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  if (*fit_cmd) return cmd_fit(data_path, dopt, cfg, report_path);
  if (*pred_cmd) return cmd_predict(artifact_path, loc_path, predict_B, cfg.seed,
                                    cfg.threads, cfg.out);
  if (*boot_cmd) {
    if (cfg.B < 1) throw InputError("B must be >= 1");
    return cmd_predict(artifact_path, loc_path, cfg.B, cfg.seed, cfg.threads, cfg.out);
  }
  if (*sim_cmd) return cmd_simulate(cfg, theta, keep, holdout);
  if (*study_cmd) return cmd_study(sargs, dopt, cfg);
  return kInputError;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const kryging::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const kryging::EmbeddingError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  }
}
