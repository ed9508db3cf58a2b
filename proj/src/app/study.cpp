#include "kryging/app/study.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <ostream>
#include <sstream>
#include <thread>
#include <atomic>
#include <mutex>

#include "kryging/app/simulate.hpp"

namespace kryging::app {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t scaled(std::size_t n, double scale) {
  return std::max<std::size_t>(
      8, static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale)));
}

// Per-replicate seed; independent of k so every k sees the same data.
std::uint64_t replicate_seed(std::uint64_t seed, const std::string& label,
                             std::size_t rep) {
  std::seed_seq ss(label.begin(), label.end());
  std::uint32_t h[2];
  ss.generate(h, h + 2);
  std::seed_seq mix{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), h[0], h[1],
                    static_cast<std::uint32_t>(rep)};
  std::uint32_t out[2];
  mix.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) /
                   static_cast<double>(v.size()));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Scores score_predictions(const Eigen::VectorXd& y, const PredictionSet& pred) {
  const auto m = y.size();
  if (pred.y_hat.size() != m) throw InputError("score: size mismatch");
  Scores s;
  if (m == 0) return s;
  const double alpha = 0.05;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double e = y[i] - pred.y_hat[i];
    s.rmse += e * e;
    s.mae += std::abs(e);
    const double sd = pred.se.size() ? pred.se[i] : 0.0;
    if (sd > 0.0) {
      const double z = e / sd;
      const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
      s.crps += sd * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::sqrt(std::numbers::pi));
    } else {
      s.crps += std::abs(e);
    }
    const double lo = pred.ci_lo.size() ? pred.ci_lo[i] : pred.y_hat[i];
    const double hi = pred.ci_hi.size() ? pred.ci_hi[i] : pred.y_hat[i];
    s.interval += (hi - lo) + (2.0 / alpha) * std::max(0.0, lo - y[i]) +
                  (2.0 / alpha) * std::max(0.0, y[i] - hi);
    if (y[i] >= lo && y[i] <= hi) s.coverage += 1.0;
  }
  const double dm = static_cast<double>(m);
  s.rmse = std::sqrt(s.rmse / dm);
  s.mae /= dm;
  s.crps /= dm;
  s.interval /= dm;
  s.coverage /= dm;
  return s;
}

ReplicateOutcome fit_and_score(const Dataset& train, const Dataset& test,
                               const GridSpec& latent, std::size_t k,
                               const StudyConfig& cfg, std::uint64_t seed,
                               PredictionSet* pred_out) {
  const auto t0 = Clock::now();
  ModelData data{latent, build_map(train.locations, latent), train.y, train.X,
                 0.5};
  FitOptions fo = cfg.fit;
  fo.k = k;
  const FitResult fr = fit(data, fo);

  BootstrapOptions bo;
  bo.B = cfg.B;
  bo.seed = seed;
  bo.k = k;
  bo.reorthogonalize = fo.reorthogonalize;
  bo.embedding = fo.embedding;
  bo.threads = cfg.threads;
  const SparseMap A_test = build_map(test.locations, latent);
  const PredictionSet pred = bootstrap_uq(data, fr.theta_hat, fr.x_hat,
                                          test.locations, A_test, test.X, bo);
  const Scores s = score_predictions(test.y, pred);

  ReplicateOutcome out;
  out.rmse = s.rmse;
  out.coverage = s.coverage;
  out.fit_seconds = fr.wall_seconds;
  out.total_seconds = seconds_since(t0);
  out.theta_hat = fr.theta_hat;
  out.iterations = fr.iterations;
  out.converged = fr.converged;
  out.train_size = train.size();
  out.test_size = test.size();
  if (pred_out) *pred_out = pred;
  return out;
}

ReplicateOutcome run_replicate(const ReplicateDesign& design, std::size_t k,
                               const StudyConfig& cfg, std::size_t replicate) {
  const std::uint64_t seed = replicate_seed(cfg.seed, design.label, replicate);
  SimulationSpec spec;
  spec.grid = design.source;
  spec.theta = design.truth;
  spec.keep = design.keep;
  spec.holdout = cfg.holdout;
  spec.seed = seed;
  spec.embedding = cfg.fit.embedding;
  const Simulation sim = simulate(spec);
  return fit_and_score(sim.train, sim.test, design.latent, k, cfg, seed + 1);
}

CaseSummary summarize(const CaseResult& c) {
  CaseSummary s;
  s.label = c.design.label;
  s.k = c.k;
  std::vector<double> rmse, cov, minutes;
  std::vector<double> sq[4];
  for (const auto& r : c.reps) {
    rmse.push_back(r.rmse);
    cov.push_back(r.coverage);
    minutes.push_back(r.total_seconds / 60.0);
    const double est[4] = {r.theta_hat.beta[0], r.theta_hat.sigma2,
                           r.theta_hat.tau2, r.theta_hat.rho};
    const double tru[4] = {c.design.truth.beta[0], c.design.truth.sigma2,
                           c.design.truth.tau2, c.design.truth.rho};
    for (int j = 0; j < 4; ++j) sq[j].push_back((est[j] - tru[j]) * (est[j] - tru[j]));
  }
  s.rmse = mean(rmse);
  s.rmse_se = std_error(rmse);
  s.coverage = mean(cov);
  s.coverage_se = std_error(cov);
  s.median_minutes = median(minutes);
  for (int j = 0; j < 4; ++j) {
    s.param_rmse[j] = std::sqrt(mean(sq[j]));
    // delta method: se(sqrt(m)) = se(m) / (2 sqrt(m))
    s.param_rmse_se[j] =
        s.param_rmse[j] > 0.0 ? std_error(sq[j]) / (2.0 * s.param_rmse[j]) : 0.0;
  }
  return s;
}

std::vector<ReplicateDesign> study_designs(const std::string& id, double scale) {
  if (!(scale > 0.0)) throw InputError("study: scale must be positive");
  const ThetaParams setting1{Eigen::VectorXd::Constant(1, 44.49), 3.0, 0.5, 0.1};
  std::vector<ReplicateDesign> out;
  auto square = [&](std::size_t n) {
    const auto m = scaled(n, scale);
    return GridSpec::unit_square(m, m);
  };
  if (id == "grid-scaling") {
    for (std::size_t n : {100, 200, 300, 400}) {
      ReplicateDesign d;
      d.source = d.latent = square(n);
      d.truth = setting1;
      d.label = std::to_string(d.source.n1()) + "x" + std::to_string(d.source.n2());
      out.push_back(d);
    }
  } else if (id == "settings") {
    const double settings[4][2] = {{3.0, 0.05}, {3.0, 0.2}, {1.5, 0.1}, {6.0, 0.1}};
    for (int i = 0; i < 4; ++i) {
      ReplicateDesign d;
      d.source = d.latent = square(200);
      d.truth = setting1;
      d.truth.sigma2 = settings[i][0];
      d.truth.rho = settings[i][1];
      d.label = "Setting " + std::to_string(i + 1);
      out.push_back(d);
    }
  } else if (id == "irregular") {
    for (std::size_t n : {200, 300, 400}) {
      ReplicateDesign d;
      d.source = square(1000);
      d.latent = square(n);
      d.truth = setting1;
      d.keep = 0.04;
      d.label = "latent " + std::to_string(d.latent.n1()) + "x" +
                std::to_string(d.latent.n2());
      out.push_back(d);
    }
  } else {
    throw InputError("unknown study '" + id +
                     "' (expected grid-scaling, settings or irregular)");
  }
  return out;
}

std::vector<CaseResult> run_study(const std::string& id, const StudyConfig& cfg,
                                  std::ostream* log) {
  if (cfg.replicates < 1) throw InputError("study: replicates must be >= 1");
  if (cfg.ks.empty()) throw InputError("study: no k values");
  std::vector<CaseResult> out;
  for (const auto& design : study_designs(id, cfg.scale))
    for (std::size_t k : cfg.ks) {
      CaseResult c;
      c.design = design;
      c.k = k;
      c.reps.resize(cfg.replicates);
      out.push_back(std::move(c));
    }

  // Tasks are (case, replicate) pairs; seeds depend only on the design label
  // and replicate index, so scheduling does not change results.
  const std::size_t total = out.size() * cfg.replicates;
  std::size_t workers = cfg.workers ? cfg.workers : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, total);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto work = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= total) return;
      auto& c = out[t / cfg.replicates];
      const std::size_t r = t % cfg.replicates;
      try {
        c.reps[r] = run_replicate(c.design, c.k, cfg, r);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = total;
        return;
      }
      if (log) {
        const auto& o = c.reps[r];
        std::ostringstream os;
        os << c.design.label << " k=" << c.k << " rep " << r + 1 << "/"
           << cfg.replicates << ": rmse=" << o.rmse << " coverage=" << o.coverage
           << " " << o.theta_hat.to_string() << " (" << std::fixed
           << std::setprecision(1) << o.total_seconds << "s)\n";
        std::lock_guard lock(mu);
        *log << os.str() << std::flush;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

ModisResult run_modis(const Dataset& train, const Dataset& test,
                      const GridSpec& latent, const ModisOptions& mo,
                      const StudyConfig& cfg) {
  if (!test.has_response() || test.size() == 0)
    throw InputError("modis: test set needs responses");
  ModisResult res;
  StudyConfig base = cfg;
  base.fit.k = mo.k;
  const auto& starts = cfg.fit.starts;

  if (starts.size() > 1 && mo.cv_folds >= 2) {
    const std::size_t p = train.size();
    if (p < mo.cv_folds) throw InputError("modis: fewer rows than folds");
    std::vector<std::size_t> perm(p);
    for (std::size_t i = 0; i < p; ++i) perm[i] = i;
    std::seed_seq ss{static_cast<std::uint32_t>(mo.cv_seed),
                     static_cast<std::uint32_t>(mo.cv_seed >> 32)};
    std::mt19937_64 rng(ss);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (const auto& start : starts) {
      double sse = 0.0;
      for (std::size_t f = 0; f < mo.cv_folds; ++f) {
        std::vector<std::size_t> fit_rows, val_rows;
        for (std::size_t i = 0; i < p; ++i)
          (i % mo.cv_folds == f ? val_rows : fit_rows).push_back(perm[i]);
        const Dataset tr = train.subset(fit_rows), va = train.subset(val_rows);
        ModelData data{latent, build_map(tr.locations, latent), tr.y, tr.X, 0.5};
        FitOptions fo = base.fit;
        fo.starts = {start};
        const FitResult fr = fit(data, fo);
        const Eigen::VectorXd yhat =
            predict(fr.theta_hat, fr.x_hat, build_map(va.locations, latent), va.X);
        sse += (yhat - va.y).squaredNorm();
      }
      res.cv_rmse.push_back(std::sqrt(sse / static_cast<double>(p)));
    }
    res.chosen_start = static_cast<std::size_t>(
        std::min_element(res.cv_rmse.begin(), res.cv_rmse.end()) - res.cv_rmse.begin());
    base.fit.starts = {starts[res.chosen_start]};
  }

  ModelData data{latent, build_map(train.locations, latent), train.y, train.X, 0.5};
  res.fit = fit(data, base.fit);
  if (res.cv_rmse.empty()) res.chosen_start = res.fit.start_index;
  BootstrapOptions bo;
  bo.B = cfg.B;
  bo.seed = cfg.seed;
  bo.k = mo.k;
  bo.reorthogonalize = base.fit.reorthogonalize;
  bo.embedding = base.fit.embedding;
  bo.threads = cfg.threads;
  res.prediction = bootstrap_uq(data, res.fit.theta_hat, res.fit.x_hat,
                                test.locations, build_map(test.locations, latent),
                                test.X, bo);
  res.scores = score_predictions(test.y, res.prediction);
  return res;
}

void write_scores(std::ostream& out, const Scores& s) {
  out << std::fixed << std::setprecision(3) << "MAE   " << s.mae << "\nRMSE  "
      << s.rmse << "\nCRPS  " << s.crps << "\nINT   " << s.interval
      << "\nCVG   " << s.coverage << '\n'
      << std::defaultfloat << std::setprecision(6);
}

void write_study_tables(std::ostream& out, const std::vector<CaseResult>& cases) {
  std::vector<CaseSummary> rows;
  for (const auto& c : cases) rows.push_back(summarize(c));
  auto fmt = [](double v, int prec = 2) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
  };
  out << "Prediction: RMSE_coverage (SE of RMSE_SE of coverage)\n";
  out << std::left << std::setw(18) << "case" << std::setw(6) << "k"
      << std::setw(14) << "RMSE_CVG" << "SE\n";
  for (const auto& r : rows)
    out << std::setw(18) << r.label << std::setw(6) << r.k << std::setw(14)
        << (fmt(r.rmse) + "_" + fmt(r.coverage))
        << fmt(r.rmse_se) + "_" + fmt(r.coverage_se) << '\n';
  out << "\nMedian time per replicate (minutes)\n";
  for (const auto& r : rows)
    out << std::setw(18) << r.label << std::setw(6) << r.k
        << fmt(r.median_minutes) << '\n';
  out << "\nParameter RMSE (SE)\n";
  out << std::setw(18) << "case" << std::setw(6) << "k" << std::setw(14)
      << "beta" << std::setw(14) << "sigma2" << std::setw(14) << "tau2"
      << "rho\n";
  for (const auto& r : rows) {
    out << std::setw(18) << r.label << std::setw(6) << r.k;
    for (int j = 0; j < 4; ++j)
      out << std::setw(j < 3 ? 14 : 0)
          << (fmt(r.param_rmse[j]) + " (" + fmt(r.param_rmse_se[j]) + ")");
    out << '\n';
  }
  out << std::right;
}

}  // namespace kryging::app
