#include "kryging/gengk.hpp"

#include <algorithm>
#include <cmath>

namespace kryging {

namespace {

// Cancellation threshold for a reorthogonalized direction: if almost nothing
// survives projection the new vector lies numerically in the current span.
constexpr double kReorthCancellation = 1e-10;

double sigma_norm(const Eigen::VectorXd& w, const Eigen::VectorXd& sw) {
  return std::sqrt(std::max(0.0, w.dot(sw)));
}

}  // namespace

Eigen::MatrixXd GenGKFactorization::bidiagonal() const {
  const auto k = alpha.size();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(k + 1, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    B(i, i) = alpha[i];
    B(i + 1, i) = beta[i];
  }
  return B;
}

GenGKFactorization gengk_factorize(const SparseMap& A, const BttbOperator& sigma,
                                   const Eigen::VectorXd& b, double tau2,
                                   const GenGKOptions& opts) {
  if (opts.k < 1) throw InputError("gengk: k must be at least 1");
  if (!(tau2 > 0.0) || !std::isfinite(tau2))
    throw InputError("gengk: tau2 must be positive");
  if (A.cols() != sigma.size() ||
      static_cast<std::size_t>(b.size()) != A.rows())
    throw InputError("gengk: dimension mismatch");
  const double bnorm = b.norm();
  if (!(bnorm > 0.0)) throw InputError("gengk: right-hand side is zero");

  const auto p = static_cast<Eigen::Index>(A.rows());
  const auto n = static_cast<Eigen::Index>(A.cols());
  const auto kmax = static_cast<Eigen::Index>(opts.k);
  const double tau = std::sqrt(tau2);

  GenGKFactorization f;
  f.tau2 = tau2;
  f.U.resize(p, kmax + 1);
  f.V.resize(n, kmax + 1);
  f.SigmaV.resize(n, kmax + 1);
  Eigen::VectorXd alpha(kmax), beta(kmax);

  // u1 = b / beta1, beta1 = ||b|| / tau.
  f.beta1 = bnorm / tau;
  f.U.col(0) = b / f.beta1;
  double scale = f.beta1;

  // v1 = (A^T u1 / tau^2) / alpha1, alpha1 its Sigma-norm.
  Eigen::VectorXd w = A.apply_t(f.U.col(0)) / tau2;
  Eigen::VectorXd sw = sigma.apply(w);
  double a = sigma_norm(w, sw);
  scale = std::max(scale, a);
  Eigen::Index k = 0;
  if (a <= opts.breakdown_tol * scale) {
    throw InputError("gengk: A^T b vanishes; no Krylov direction available");
  }
  f.V.col(0) = w / a;
  f.SigmaV.col(0) = sw / a;
  double alpha_i = a;

  for (Eigen::Index i = 0; i < kmax; ++i) {
    // u_{i+1} = (A Sigma v_i - alpha_i u_i) / beta_{i+1}.
    Eigen::VectorXd r = A.apply(f.SigmaV.col(i)) - alpha_i * f.U.col(i);
    const double r_before = r.norm();
    if (opts.reorthogonalize) {
      for (int pass = 0; pass < 2; ++pass) {
        const auto Ui = f.U.leftCols(i + 1);
        r -= Ui * (Ui.transpose() * r) / tau2;
      }
    }
    const double bnext = r.norm() / tau;
    alpha[i] = alpha_i;
    beta[i] = bnext;
    scale = std::max(scale, bnext);
    k = i + 1;
    if (bnext <= opts.breakdown_tol * scale ||
        (opts.reorthogonalize && r.norm() <= kReorthCancellation * r_before)) {
      beta[i] = 0.0;
      f.U.col(i + 1).setZero();
      f.breakdown_at = static_cast<std::size_t>(k);
      break;
    }
    f.U.col(i + 1) = r / bnext;

    // v_{i+1} = (A^T u_{i+1} / tau^2 - beta_{i+1} v_i) / alpha_{i+1}.
    w = A.apply_t(f.U.col(i + 1)) / tau2 - bnext * f.V.col(i);
    const double w_before = w.norm();
    if (opts.reorthogonalize) {
      // Sigma inner product against V: w -= V (V^T Sigma w) = V ((Sigma V)^T w)
      for (int pass = 0; pass < 2; ++pass) {
        const auto Vi = f.V.leftCols(i + 1);
        const auto SVi = f.SigmaV.leftCols(i + 1);
        w -= Vi * (SVi.transpose() * w);
      }
    }
    sw = sigma.apply(w);
    a = sigma_norm(w, sw);
    scale = std::max(scale, a);
    if (a <= opts.breakdown_tol * scale ||
        (opts.reorthogonalize && w.norm() <= kReorthCancellation * w_before)) {
      // The Krylov space is exhausted at order k; B_k and U_{k+1} are valid.
      f.V.col(i + 1).setZero();
      f.SigmaV.col(i + 1).setZero();
      if (k < kmax) f.breakdown_at = static_cast<std::size_t>(k);
      break;
    }
    f.V.col(i + 1) = w / a;
    f.SigmaV.col(i + 1) = sw / a;
    alpha_i = a;
  }

  f.alpha = alpha.head(k);
  f.beta = beta.head(k);
  f.U.conservativeResize(Eigen::NoChange, k + 1);
  f.V.conservativeResize(Eigen::NoChange, k + 1);
  f.SigmaV.conservativeResize(Eigen::NoChange, k + 1);
  return f;
}

KrygingSolution solve(const GenGKFactorization& fact, double sigma2,
                      const SparseMap& A) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw InputError("solve: sigma2 must be positive");
  const auto k = static_cast<Eigen::Index>(fact.k());
  if (k < 1) throw InputError("solve: empty factorization");

  const Eigen::MatrixXd B = fact.bidiagonal();
  Eigen::MatrixXd M = B.transpose() * B;
  M.diagonal().array() += 1.0 / sigma2;
  // B^T beta1 e1 = beta1 * alpha1 * e1
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  rhs[0] = fact.beta1 * fact.alpha[0];

  Eigen::LLT<Eigen::MatrixXd> llt(M);
  // M >= I / sigma2 > 0, so this cannot fail for finite inputs.
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("solve: projected system not positive definite");

  KrygingSolution s;
  s.z = llt.solve(rhs);
  s.w = fact.V.leftCols(k) * s.z;
  s.x_star = fact.SigmaV.leftCols(k) * s.z;
  s.psi_star = fact.rhs() - A.apply(s.x_star);
  s.quad = s.z.squaredNorm();
  return s;
}

}  // namespace kryging
