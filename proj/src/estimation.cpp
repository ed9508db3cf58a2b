#include "kryging/estimation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

namespace kryging {

LikelihoodOptions FitOptions::likelihood() const {
  LikelihoodOptions lo;
  lo.gengk.k = k;
  lo.gengk.reorthogonalize = reorthogonalize;
  lo.embedding = embedding;
  lo.logdet = logdet;
  return lo;
}

ThetaParams auto_init(const ModelData& data) {
  data.validate();
  const Eigen::VectorXd beta =
      data.X.colPivHouseholderQr().solve(data.y);
  const Eigen::VectorXd r = data.y - data.X * beta;
  const double dof = std::max<double>(1.0, static_cast<double>(data.p()) -
                                               static_cast<double>(data.q()));
  double var = r.squaredNorm() / dof;
  if (!(var > 0.0)) var = 1.0;
  const double w = data.grid.x_max() - data.grid.x_min();
  const double h = data.grid.y_max() - data.grid.y_min();
  return ThetaParams{beta, 0.5 * var, 0.5 * var, 0.1 * std::hypot(w, h)};
}

namespace {

using Clock = std::chrono::steady_clock;

// argmin g^T s + s^T H s / 2 subject to ||s|| <= radius, H symmetric.
// Eigen-decomposition based; the hard case is handled by stepping along the
// leftmost eigenvector to the boundary.
Eigen::VectorXd trust_region_step(const Eigen::MatrixXd& H,
                                  const Eigen::VectorXd& g, double radius) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const Eigen::VectorXd lam = es.eigenvalues();
  const Eigen::MatrixXd& Q = es.eigenvectors();
  const Eigen::VectorXd gt = Q.transpose() * g;
  const double lmin = lam[0];

  auto step = [&](double mu) {
    Eigen::VectorXd c(gt.size());
    for (Eigen::Index i = 0; i < gt.size(); ++i) {
      const double d = lam[i] + mu;
      c[i] = d > 0.0 ? -gt[i] / d : 0.0;
    }
    return c;
  };

  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  if (lmin > 1e-12 * scale) {
    Eigen::VectorXd c = step(0.0);
    if (c.norm() <= radius) return Q * c;
  }

  // ||s(mu)|| = radius for mu > max(0, -lmin); ||s(mu)|| decreases in mu.
  double lo = std::max(0.0, -lmin);
  Eigen::VectorXd c_lo = step(lo + 1e-14 * scale);
  if (c_lo.norm() < radius) {
    // Hard case: gradient nearly orthogonal to the leftmost eigenvector.
    Eigen::VectorXd c = c_lo;
    const double rem = radius * radius - c.squaredNorm();
    c[0] += std::sqrt(std::max(0.0, rem));
    return Q * c;
  }
  double hi = lo + g.norm() / radius + scale;
  while (step(hi).norm() > radius) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (step(mid).norm() > radius) lo = mid; else hi = mid;
  }
  return Q * step(hi);
}

double model_decrease(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                      const Eigen::VectorXd& s) {
  return -(g.dot(s) + 0.5 * s.dot(H * s));
}

Eigen::VectorXd cauchy_step(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                            double radius) {
  const double gn = g.norm();
  if (gn == 0.0) return Eigen::VectorXd::Zero(g.size());
  const double curv = g.dot(H * g);
  double t = radius / gn;
  if (curv > 0.0) t = std::min(t, gn * gn / curv);
  return -t * g;
}

std::optional<ObjectiveState> try_evaluate(const ModelData& data,
                                           const Eigen::VectorXd& params,
                                           const LikelihoodOptions& lo,
                                           bool require_pd) {
  if (!params.allFinite()) return std::nullopt;
  const auto q = params.size() - 3;
  for (Eigen::Index i = q; i < params.size(); ++i)
    if (std::abs(params[i]) > 50.0) return std::nullopt;
  try {
    auto st = profile_loglik(data, from_params(params), lo, true);
    if (!std::isfinite(st.value) || !st.grad.allFinite()) return std::nullopt;
    if (require_pd && st.clamp_count > 0) return std::nullopt;
    return st;
  } catch (const EmbeddingError&) {
    return std::nullopt;
  }
}

Eigen::MatrixXd model_hessian(const ModelData& data, const ObjectiveState& st,
                              const FitOptions& opts,
                              const LikelihoodOptions& lo) {
  if (opts.hessian == HessianModel::full_approx && st.factorization.k() > 0) {
    try {
      Eigen::MatrixXd H = optimizer_hessian(
          st.theta,
          hessian_full_approx(data, st.theta, st.factorization, st.solution,
                              lo),
          st.grad_natural);
      if (H.allFinite()) return H;
    } catch (const EmbeddingError&) {
    }
  }
  return hessian_rank_one(st.grad,
                          opts.ridge_scale * (1.0 + st.grad.squaredNorm()));
}

FitResult fit_from(const ModelData& data, const ThetaParams& start,
                   const FitOptions& opts) {
  const auto t0 = Clock::now();
  const LikelihoodOptions lo = opts.likelihood();
  FitResult res;

  auto first =
      try_evaluate(data, to_params(start), lo, opts.require_pd_embedding);
  if (!first) {
    // Surface the underlying diagnostic when there is one.
    const auto st = profile_loglik(data, start, lo, false);
    throw EmbeddingError(
        "objective unusable at the starting point (" +
            std::to_string(st.clamp_count) +
            " embedding eigenvalues clamped); try a smaller range",
        st.clamp_count, 0);
  }
  ObjectiveState cur = std::move(*first);
  res.evaluations = 1;
  res.objective_trace.push_back(cur.value);
  if (opts.on_iteration) opts.on_iteration(0, cur);

  double radius = opts.initial_radius;
  Eigen::MatrixXd H = model_hessian(data, cur, opts, lo);
  int small_changes = 0;
  res.stop_reason = "max_iter";

  while (res.iterations < opts.max_iter) {
    const double fscale = 1.0 + std::abs(cur.value);
    if (cur.grad.lpNorm<Eigen::Infinity>() <= opts.tol * fscale) {
      res.converged = true;
      res.stop_reason = "gradient";
      break;
    }
    if (radius < opts.min_radius) {
      res.stop_reason = "radius";
      break;
    }

    Eigen::VectorXd s = trust_region_step(H, cur.grad, radius);
    const Eigen::VectorXd sc = cauchy_step(H, cur.grad, radius);
    double pred = model_decrease(H, cur.grad, s);
    const double pred_c = model_decrease(H, cur.grad, sc);
    if (!s.allFinite() || !(pred >= pred_c)) {
      s = sc;
      pred = pred_c;
    }
    const double snorm = s.norm();
    if (!(pred > 0.0) || snorm == 0.0) {
      res.converged = true;
      res.stop_reason = "stationary";
      break;
    }

    auto trial =
        try_evaluate(data, cur.params + s, lo, opts.require_pd_embedding);
    ++res.evaluations;
    const double actual = trial ? cur.value - trial->value
                                : -std::numeric_limits<double>::infinity();
    const double ratio = actual / pred;

    if (ratio < 0.25)
      radius = 0.25 * snorm;
    else if (ratio > 0.75 && snorm >= 0.99 * radius)
      radius = std::min(2.0 * radius, opts.max_radius);

    if (!(ratio > 1e-4)) {
      ++res.rejected_steps;
      continue;
    }

    ++res.iterations;
    cur = std::move(*trial);
    res.objective_trace.push_back(cur.value);
    if (opts.on_iteration) opts.on_iteration(res.iterations, cur);

    if (actual <= opts.tol * (1.0 + std::abs(cur.value))) {
      if (++small_changes >= 2) {
        res.converged = true;
        res.stop_reason = "objective";
        break;
      }
    } else {
      small_changes = 0;
    }
    H = model_hessian(data, cur, opts, lo);
  }

  res.theta_hat = cur.theta;
  res.x_hat = cur.solution.x_star;
  res.objective = cur.value;
  res.grad_norm = cur.grad.norm();
  res.clamp_count = cur.clamp_count;
  res.k_effective = cur.k_effective;
  res.wall_seconds =
      std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

}  // namespace

FitResult fit(const ModelData& data, const FitOptions& opts) {
  data.validate();
  if (opts.k < 1) throw InputError("fit: k must be at least 1");
  std::vector<ThetaParams> starts = opts.starts;
  if (starts.empty()) starts.push_back(auto_init(data));
  for (const auto& s : starts) {
    s.validate();
    if (static_cast<std::size_t>(s.beta.size()) != data.q())
      throw InputError("fit: starting beta length does not match covariates");
  }

  const auto t0 = Clock::now();
  std::optional<FitResult> best;
  std::optional<EmbeddingError> last_error;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    try {
      FitResult r = fit_from(data, starts[i], opts);
      r.start_index = i;
      if (!best || r.objective < best->objective) best = std::move(r);
    } catch (const EmbeddingError& e) {
      last_error = e;
    }
  }
  if (!best) throw *last_error;
  best->wall_seconds =
      std::chrono::duration<double>(Clock::now() - t0).count();
  return *best;
}

Eigen::VectorXd kryge(const ModelData& data, const ThetaParams& theta,
                      const LikelihoodOptions& opts) {
  theta.validate();
  const Eigen::VectorXd b = data.y - data.X * theta.beta;
  if (!(b.norm() > 0.0))
    return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.n()));
  const auto sigma = BttbOperator::matern(
      data.grid, MaternSpec{1.0, theta.rho, data.nu}, opts.embedding);
  const auto f = gengk_factorize(data.A, sigma, b, theta.tau2, opts.gengk);
  return solve(f, theta.sigma2, data.A).x_star;
}

Eigen::VectorXd predict(const ThetaParams& theta, const Eigen::VectorXd& x_hat,
                        const SparseMap& A_pred,
                        const Eigen::MatrixXd& X_pred) {
  if (static_cast<std::size_t>(X_pred.rows()) != A_pred.rows() ||
      X_pred.cols() != theta.beta.size())
    throw InputError("predict: covariate dimensions do not match");
  return X_pred * theta.beta + A_pred.apply(x_hat);
}

PredictionSet bootstrap_uq(const ModelData& data, const ThetaParams& theta_hat,
                           const Eigen::VectorXd& x_hat,
                           const std::vector<Location>& locations,
                           const SparseMap& A_pred,
                           const Eigen::MatrixXd& X_pred,
                           const BootstrapOptions& opts) {
  data.validate();
  theta_hat.validate();
  if (opts.B < 1) throw InputError("bootstrap: B must be at least 1");
  if (A_pred.cols() != data.n())
    throw InputError("bootstrap: prediction map does not match grid");

  const auto sigma = BttbOperator::matern(
      data.grid, MaternSpec{1.0, theta_hat.rho, data.nu}, opts.embedding);
  sigma.require_usable("bootstrap sampling");

  LikelihoodOptions lo;
  lo.gengk.k = opts.k;
  lo.gengk.reorthogonalize = opts.reorthogonalize;
  lo.embedding = opts.embedding;

  const auto m = static_cast<Eigen::Index>(A_pred.rows());
  const double sd = std::sqrt(theta_hat.sigma2);
  const double tau = std::sqrt(theta_hat.tau2);
  const Eigen::VectorXd mean_obs = data.X * theta_hat.beta;
  const Eigen::VectorXd mean_pred = X_pred * theta_hat.beta;

  std::vector<Eigen::VectorXd> sq(opts.B);
  auto replicate = [&](std::size_t b) {
    const Eigen::VectorXd xb = sd * sample_gaussian(sigma, opts.seed, b);
    std::seed_seq ss{opts.seed, static_cast<std::uint64_t>(b),
                     std::uint64_t{0x6e6f697365}};
    std::mt19937_64 rng(ss);
    std::normal_distribution<double> nd;
    Eigen::VectorXd yb = mean_obs + data.A.apply(xb);
    for (Eigen::Index i = 0; i < yb.size(); ++i) yb[i] += tau * nd(rng);
    Eigen::VectorXd ystar = mean_pred + A_pred.apply(xb);
    for (Eigen::Index i = 0; i < m; ++i) ystar[i] += tau * nd(rng);

    Eigen::VectorXd xhat_b = Eigen::VectorXd::Zero(xb.size());
    const Eigen::VectorXd rb = yb - mean_obs;
    if (rb.norm() > 0.0) {
      const auto f =
          gengk_factorize(data.A, sigma, rb, theta_hat.tau2, lo.gengk);
      xhat_b = solve(f, theta_hat.sigma2, data.A).x_star;
    }
    const Eigen::VectorXd yhat_b = mean_pred + A_pred.apply(xhat_b);
    sq[b] = (ystar - yhat_b).array().square();
  };

  std::size_t threads = opts.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, opts.B);
  if (threads <= 1) {
    for (std::size_t b = 0; b < opts.B; ++b) replicate(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t b; (b = next.fetch_add(1)) < opts.B;) replicate(b);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Summed in replicate order so the result does not depend on scheduling.
  Eigen::VectorXd mse = Eigen::VectorXd::Zero(m);
  for (const auto& v : sq) mse += v;
  mse /= static_cast<double>(opts.B);

  PredictionSet out;
  out.locations = locations;
  out.y_hat = predict(theta_hat, x_hat, A_pred, X_pred);
  out.se = mse.cwiseSqrt();
  out.ci_lo = out.y_hat - 1.96 * out.se;
  out.ci_hi = out.y_hat + 1.96 * out.se;
  return out;
}

}  // namespace kryging
