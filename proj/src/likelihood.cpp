#include "kryging/likelihood.hpp"

#include <cmath>

namespace kryging {

void ModelData::validate() const {
  if (A.rows() != p()) throw InputError("mapping rows do not match y");
  if (A.cols() != n()) throw InputError("mapping columns do not match grid");
  if (static_cast<std::size_t>(X.rows()) != p())
    throw InputError("covariate rows do not match y");
  if (p() < q()) throw InputError("fewer observations than covariates");
  if (!y.allFinite() || !X.allFinite())
    throw InputError("non-finite observations or covariates");
  if (!(nu > 0.0)) throw InputError("smoothness must be positive");
}

Eigen::VectorXd to_params(const ThetaParams& theta) {
  const auto q = theta.beta.size();
  Eigen::VectorXd u(q + 3);
  u.head(q) = theta.beta;
  u[q] = std::log(theta.sigma2);
  u[q + 1] = std::log(theta.tau2);
  u[q + 2] = std::log(theta.rho);
  return u;
}

ThetaParams from_params(const Eigen::VectorXd& params) {
  const auto q = params.size() - 3;
  if (q < 0) throw InputError("parameter vector too short");
  return ThetaParams{params.head(q), std::exp(params[q]),
                     std::exp(params[q + 1]), std::exp(params[q + 2])};
}

LogdetTerms logdet_terms(const GridSpec& grid, double rho, double nu,
                         const EmbeddingOptions& emb, LogdetMethod method) {
  const MaternSpec spec{1.0, rho, nu};
  LogdetTerms t;
  if (method == LogdetMethod::dense) {
    const Eigen::MatrixXd S =
        dense_from_first_column(grid, first_column(grid, spec));
    const Eigen::MatrixXd dS = dense_from_first_column(
        grid, first_column(grid, spec, KernelTerm::drho));
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
      throw EmbeddingError("dense logdet: correlation not positive definite", 0,
                           grid.size());
    t.logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    t.dlogdet = llt.solve(dS).trace();
    return t;
  }
  const auto op = BttbOperator::matern(grid, spec, emb);
  const auto dop =
      BttbOperator::matern_derivative(grid, spec, KernelTerm::drho, emb);
  t.logdet = logdet(op);
  t.dlogdet = dlogdet_drho(op, dop);
  t.clamp_count = op.clamp_count();
  return t;
}

ObjectiveState profile_loglik(const ModelData& data, const ThetaParams& theta,
                              const LikelihoodOptions& opts,
                              bool with_gradient) {
  theta.validate();
  if (static_cast<std::size_t>(theta.beta.size()) != data.q())
    throw InputError("beta length does not match covariates");

  ObjectiveState st;
  st.theta = theta;
  st.params = to_params(theta);

  const MaternSpec spec{1.0, theta.rho, data.nu};
  const auto sigma = BttbOperator::matern(data.grid, spec, opts.embedding);
  st.clamp_count = sigma.clamp_count();

  const Eigen::VectorXd b = data.y - data.X * theta.beta;
  const auto n = static_cast<Eigen::Index>(data.n());
  if (b.norm() > 0.0) {
    st.factorization =
        gengk_factorize(data.A, sigma, b, theta.tau2, opts.gengk);
    st.solution = solve(st.factorization, theta.sigma2, data.A);
  } else {
    // y = X beta exactly: the profiled latent state is zero.
    st.solution.z.resize(0);
    st.solution.w = Eigen::VectorXd::Zero(n);
    st.solution.x_star = Eigen::VectorXd::Zero(n);
    st.solution.psi_star = b;
    st.solution.quad = 0.0;
  }
  st.k_effective = st.factorization.k();

  LogdetTerms ld;
  if (opts.logdet == LogdetMethod::dense) {
    ld = logdet_terms(data.grid, theta.rho, data.nu, opts.embedding,
                      LogdetMethod::dense);
  } else {
    ld.logdet = logdet(sigma);
    if (with_gradient) {
      const auto dop = BttbOperator::matern_derivative(
          data.grid, spec, KernelTerm::drho, opts.embedding);
      ld.dlogdet = dlogdet_drho(sigma, dop);
    }
  }
  st.logdet = ld.logdet;
  st.dlogdet = ld.dlogdet;

  const double p = static_cast<double>(data.p());
  const double nn = static_cast<double>(data.n());
  const auto& psi = st.solution.psi_star;
  st.value = 0.5 * p * std::log(theta.tau2) +
             0.5 * psi.squaredNorm() / theta.tau2 +
             0.5 * nn * std::log(theta.sigma2) + 0.5 * st.logdet +
             0.5 * st.solution.quad / theta.sigma2;
  if (!std::isfinite(st.value))
    throw EmbeddingError("profile likelihood is not finite", st.clamp_count,
                         sigma.spectrum_size());

  if (with_gradient) {
    st.grad_natural =
        gradient(data, theta, st.solution, st.dlogdet, opts.embedding);
    st.grad = optimizer_gradient(theta, st.grad_natural);
  }
  return st;
}

Eigen::VectorXd gradient(const ModelData& data, const ThetaParams& theta,
                         const KrygingSolution& solution, double dlogdet,
                         const EmbeddingOptions& emb) {
  const auto q = static_cast<Eigen::Index>(data.q());
  const double lambda2 = theta.lambda2();
  const double lambda_e2 = theta.lambda_e2();
  const double p = static_cast<double>(data.p());
  const double n = static_cast<double>(data.n());
  const auto& psi = solution.psi_star;

  // z^T V^T dSigma V z = w^T dSigma w with w = V z: one derivative matvec.
  double rho_quad = 0.0;
  if (solution.w.size() > 0 && solution.w.squaredNorm() > 0.0) {
    const auto dop = BttbOperator::matern_derivative(
        data.grid, MaternSpec{1.0, theta.rho, data.nu}, KernelTerm::drho, emb);
    rho_quad = solution.w.dot(dop.apply(solution.w));
  }

  Eigen::VectorXd g(q + 3);
  g.head(q) = lambda_e2 * (data.X.transpose() * psi);
  g[q] = n / (2.0 * lambda2) - 0.5 * solution.quad;
  g[q + 1] = p / (2.0 * lambda_e2) - 0.5 * psi.squaredNorm();
  g[q + 2] = -0.5 * dlogdet + 0.5 * lambda2 * rho_quad;
  return g;
}

Eigen::VectorXd optimizer_gradient(const ThetaParams& theta,
                                   const Eigen::VectorXd& grad_natural) {
  const auto q = grad_natural.size() - 3;
  Eigen::VectorXd g(grad_natural.size());
  g.head(q) = -grad_natural.head(q);
  // lambda2 = exp(-log sigma2), lambda_e2 = exp(-log tau2), rho = exp(log rho)
  g[q] = theta.lambda2() * grad_natural[q];
  g[q + 1] = theta.lambda_e2() * grad_natural[q + 1];
  g[q + 2] = -theta.rho * grad_natural[q + 2];
  return g;
}

Eigen::MatrixXd hessian_rank_one(const Eigen::VectorXd& grad, double ridge) {
  Eigen::MatrixXd h = grad * grad.transpose();
  h.diagonal().array() += ridge;
  return h;
}

namespace {

// Posterior covariance Gamma = (lambda_e2 A^T A + lambda2 Sigma^{-1})^{-1}
// approximated from the bidiagonalization as
//   Gamma ~ (Sigma - Z D Z^T) / lambda2,  Z = Sigma V W,
// with B^T B = W Theta W^T and D = Theta (Theta + lambda2 I)^{-1}.
class KrylovGamma {
 public:
  KrylovGamma(const GenGKFactorization& fact, const BttbOperator& sigma,
              double lambda2)
      : fact_(fact), sigma_(sigma), lambda2_(lambda2) {
    const auto k = static_cast<Eigen::Index>(fact.k());
    const Eigen::MatrixXd B = fact.bidiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B.transpose() * B);
    W_ = es.eigenvectors();
    const Eigen::VectorXd theta = es.eigenvalues().cwiseMax(0.0);
    D_ = theta.array() / (theta.array() + lambda2);
    V_ = fact.V.leftCols(k);
    SV_ = fact.SigmaV.leftCols(k);
  }

  // Gamma v
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    return (sigma_.apply(v) - low_rank(SV_.transpose() * v)) / lambda2_;
  }
  // Gamma Sigma^{-1} v
  Eigen::VectorXd apply_siginv(const Eigen::VectorXd& v) const {
    return (v - low_rank(V_.transpose() * v)) / lambda2_;
  }
  // v^T (Sigma^{-1} - lambda2 Sigma^{-1} Gamma Sigma^{-1}) v
  double bracket_quad(const Eigen::VectorXd& v) const {
    const Eigen::VectorXd t = W_.transpose() * (V_.transpose() * v);
    return t.dot(D_.cwiseProduct(t));
  }

 private:
  // Sigma V W D W^T c
  Eigen::VectorXd low_rank(const Eigen::VectorXd& c) const {
    return SV_ * (W_ * D_.cwiseProduct(W_.transpose() * c));
  }

  const GenGKFactorization& fact_;
  const BttbOperator& sigma_;
  double lambda2_;
  Eigen::MatrixXd W_, V_, SV_;
  Eigen::VectorXd D_;
};

}  // namespace

Eigen::MatrixXd hessian_full_approx(const ModelData& data,
                                    const ThetaParams& theta,
                                    const GenGKFactorization& fact,
                                    const KrygingSolution& solution,
                                    const LikelihoodOptions& opts) {
  if (fact.k() < 1) throw InputError("hessian_full_approx: empty factorization");
  const auto q = static_cast<Eigen::Index>(data.q());
  const double l2 = theta.lambda2();
  const double le2 = theta.lambda_e2();
  const double p = static_cast<double>(data.p());
  const double n = static_cast<double>(data.n());
  const MaternSpec spec{1.0, theta.rho, data.nu};

  const auto sigma = BttbOperator::matern(data.grid, spec, opts.embedding);
  const auto dsig = BttbOperator::matern_derivative(
      data.grid, spec, KernelTerm::drho, opts.embedding);
  const auto d2sig = BttbOperator::matern_derivative(
      data.grid, spec, KernelTerm::d2rho, opts.embedding);
  const KrylovGamma gamma(fact, sigma, l2);

  const Eigen::VectorXd& m = solution.w;  // Sigma^{-1} x_star
  const Eigen::VectorXd& psi = solution.psi_star;
  const Eigen::MatrixXd& X = data.X;
  const SparseMap& A = data.A;

  const Eigen::VectorXd dSm = dsig.apply(m);
  const Eigen::VectorXd d2Sm = d2sig.apply(m);
  const Eigen::VectorXd Gm = gamma.apply_siginv(solution.x_star);  // Gamma m
  const Eigen::VectorXd GdSm = gamma.apply_siginv(dSm);  // Gamma Sigma^-1 dS m
  const Eigen::VectorXd Atpsi = A.apply_t(psi);
  const Eigen::VectorXd GAtpsi = gamma.apply(Atpsi);

  // d2 logdet / d rho2 by central difference of the logdet derivative.
  const double h = 1e-4 * theta.rho;
  const double d2L =
      (logdet_terms(data.grid, theta.rho + h, data.nu, opts.embedding,
                    opts.logdet).dlogdet -
       logdet_terms(data.grid, theta.rho - h, data.nu, opts.embedding,
                    opts.logdet).dlogdet) /
      (2.0 * h);

  const Eigen::Index il = q, ie = q + 1, ir = q + 2;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(q + 3, q + 3);

  // X^T A Gamma A^T X
  Eigen::MatrixXd AGAtX(static_cast<Eigen::Index>(data.p()), q);
  for (Eigen::Index j = 0; j < q; ++j)
    AGAtX.col(j) = A.apply(gamma.apply(A.apply_t(X.col(j))));
  H.topLeftCorner(q, q) =
      -le2 * X.transpose() * X + le2 * le2 * X.transpose() * AGAtX;
  H.block(0, il, q, 1) = le2 * X.transpose() * A.apply(Gm);
  H.block(0, ir, q, 1) = -le2 * l2 * X.transpose() * A.apply(GdSm);
  H.block(0, ie, q, 1) =
      X.transpose() * psi - le2 * X.transpose() * A.apply(GAtpsi);

  H(il, il) = -n / (2.0 * l2 * l2) + m.dot(Gm);
  H(il, ir) = 0.5 * m.dot(dSm) - l2 * m.dot(GdSm);
  H(il, ie) = -m.dot(GAtpsi);
  H(ir, ir) = -0.5 * d2L + 0.5 * l2 * m.dot(d2Sm) - l2 * gamma.bracket_quad(dSm);
  H(ie, ir) = l2 * GdSm.dot(Atpsi);
  H(ie, ie) = -p / (2.0 * le2 * le2) + Atpsi.dot(GAtpsi);

  return H.selfadjointView<Eigen::Upper>();
}

Eigen::MatrixXd optimizer_hessian(const ThetaParams& theta,
                                  const Eigen::MatrixXd& hess_natural,
                                  const Eigen::VectorXd& grad_natural) {
  const auto dim = grad_natural.size();
  const auto q = dim - 3;
  Eigen::VectorXd J = Eigen::VectorXd::Ones(dim);
  J[q] = -theta.lambda2();
  J[q + 1] = -theta.lambda_e2();
  J[q + 2] = theta.rho;
  // f = -pl; the second derivatives of the coordinate maps equal the
  // maps themselves (exp(-s)'' = exp(-s), exp(r)'' = exp(r)).
  Eigen::MatrixXd H = -(J.asDiagonal() * hess_natural * J.asDiagonal());
  H(q, q) += -grad_natural[q] * theta.lambda2();
  H(q + 1, q + 1) += -grad_natural[q + 1] * theta.lambda_e2();
  H(q + 2, q + 2) += -grad_natural[q + 2] * theta.rho;
  return H;
}

}  // namespace kryging
