#include "kryging/toeplitz_ops.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <random>
#include <tuple>

#include <fftw3.h>

namespace kryging {

namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

RealBuffer alloc_real(std::size_t n) {
  return RealBuffer(fftw_alloc_real(n));
}
ComplexBuffer alloc_complex(std::size_t n) {
  return ComplexBuffer(fftw_alloc_complex(n));
}

// FFTW planning is not thread-safe, execution with the new-array interface is.
// Plans are created once per shape and shared for the life of the process.
struct PlanPair {
  fftw_plan forward = nullptr;   // r2c
  fftw_plan backward = nullptr;  // c2r
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

const PlanPair& plans_for(std::size_t m1, std::size_t m2) {
  static std::map<std::pair<std::size_t, std::size_t>, PlanPair> cache;
  std::lock_guard lock(planner_mutex());
  auto key = std::make_pair(m1, m2);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const std::size_t half = m1 / 2 + 1;
  auto re = alloc_real(m1 * m2);
  auto cx = alloc_complex(half * m2);
  PlanPair pp;
  // Row-major dims {m2, m1}: axis 1 is the fastest-varying (last) dimension.
  pp.forward = fftw_plan_dft_r2c_2d(static_cast<int>(m2), static_cast<int>(m1),
                                    re.get(), cx.get(), FFTW_ESTIMATE);
  pp.backward = fftw_plan_dft_c2r_2d(static_cast<int>(m2), static_cast<int>(m1),
                                     cx.get(), re.get(), FFTW_ESTIMATE);
  return cache.emplace(key, pp).first->second;
}

// Fill the base (first column) of a circulant embedding of size m1 x m2 from a
// lattice first column of size n1 x n2. Lags beyond the lattice wrap around
// symmetrically; any padding in between is zero.
void embed_first_column(const GridSpec& grid, const Eigen::VectorXd& col,
                        std::size_t m1, std::size_t m2, double* out) {
  const std::size_t n1 = grid.n1(), n2 = grid.n2();
  auto lag = [](std::size_t a, std::size_t m, std::size_t n) -> long {
    if (a < n) return static_cast<long>(a);
    if (a > m - n) return static_cast<long>(m - a);
    return -1;
  };
  for (std::size_t b = 0; b < m2; ++b) {
    const long lb = lag(b, m2, n2);
    for (std::size_t a = 0; a < m1; ++a) {
      const long la = lag(a, m1, n1);
      out[a + m1 * b] = (la < 0 || lb < 0)
                            ? 0.0
                            : col[la + static_cast<long>(n1) * lb];
    }
  }
}

struct Spectrum {
  Eigen::VectorXd eig;  // half spectrum [q][p]
  double imag_residue = 0.0;
};

Spectrum embedding_spectrum(const GridSpec& grid, const Eigen::VectorXd& col,
                            std::size_t m1, std::size_t m2) {
  const std::size_t half = m1 / 2 + 1;
  const PlanPair& pp = plans_for(m1, m2);
  auto re = alloc_real(m1 * m2);
  auto cx = alloc_complex(half * m2);
  embed_first_column(grid, col, m1, m2, re.get());
  fftw_execute_dft_r2c(pp.forward, re.get(), cx.get());
  Spectrum s;
  s.eig.resize(static_cast<Eigen::Index>(half * m2));
  double max_abs = 0.0, max_imag = 0.0;
  for (std::size_t i = 0; i < half * m2; ++i) {
    s.eig[static_cast<Eigen::Index>(i)] = cx[i][0];
    max_abs = std::max(max_abs, std::abs(cx[i][0]));
    max_imag = std::max(max_imag, std::abs(cx[i][1]));
  }
  s.imag_residue = max_abs > 0.0 ? max_imag / max_abs : max_imag;
  return s;
}

}  // namespace

/// A circulant embedding used for matrix-vector products.
class CirculantPlan {
 public:
  CirculantPlan(const GridSpec& grid, std::size_t m1, std::size_t m2,
                Eigen::VectorXd half_eig)
      : grid_(grid), m1_(m1), m2_(m2), eig_(std::move(half_eig)),
        plans_(plans_for(m1, m2)) {}

  void apply(std::span<const double> v, std::span<double> out) const {
    const std::size_t n1 = grid_.n1(), n2 = grid_.n2();
    const std::size_t half = m1_ / 2 + 1;
    auto re = alloc_real(m1_ * m2_);
    auto cx = alloc_complex(half * m2_);
    std::fill(re.get(), re.get() + m1_ * m2_, 0.0);
    for (std::size_t i2 = 0; i2 < n2; ++i2)
      std::copy_n(v.data() + i2 * n1, n1, re.get() + i2 * m1_);
    fftw_execute_dft_r2c(plans_.forward, re.get(), cx.get());
    const double scale = 1.0 / static_cast<double>(m1_ * m2_);
    for (std::size_t i = 0; i < half * m2_; ++i) {
      const double f = eig_[static_cast<Eigen::Index>(i)] * scale;
      cx[i][0] *= f;
      cx[i][1] *= f;
    }
    fftw_execute_dft_c2r(plans_.backward, cx.get(), re.get());
    for (std::size_t i2 = 0; i2 < n2; ++i2)
      std::copy_n(re.get() + i2 * m1_, n1, out.data() + i2 * n1);
  }

 private:
  GridSpec grid_;
  std::size_t m1_, m2_;
  Eigen::VectorXd eig_;
  const PlanPair& plans_;
};

std::size_t fast_fft_length(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t f : {2u, 3u, 5u})
      while (r % f == 0) r /= f;
    if (r == 1) return m;
  }
}

BttbOperator::BttbOperator(const GridSpec& grid, Eigen::VectorXd first_col,
                           const EmbeddingOptions& opts, SpectrumKind kind)
    : grid_(grid), first_col_(std::move(first_col)), opts_(opts), kind_(kind) {
  if (static_cast<std::size_t>(first_col_.size()) != grid_.size())
    throw InputError("first column length does not match grid size");
  if (!first_col_.allFinite())
    throw InputError("first column has non-finite entries");

  const std::size_t m1 = embed_n1(), m2 = embed_n2();
  Spectrum s = embedding_spectrum(grid_, first_col_, m1, m2);
  eig_raw_ = std::move(s.eig);
  imag_residue_ = s.imag_residue;
  min_raw_ = eig_raw_.minCoeff();
  max_raw_ = eig_raw_.maxCoeff();

  eig_clamped_ = eig_raw_;
  if (kind_ == SpectrumKind::covariance) {
    const double floor =
        max_raw_ > 0.0 ? opts_.clamp_floor_rel * max_raw_ : 0.0;
    const std::size_t half = m1 / 2 + 1;
    for (std::size_t q = 0; q < m2; ++q)
      for (std::size_t p = 0; p < half; ++p) {
        double& e = eig_clamped_[static_cast<Eigen::Index>(q * half + p)];
        if (!(e >= floor) || max_raw_ <= 0.0) {
          e = floor;
          // p > 0 stands for both p and m1 - p in the full spectrum.
          clamp_count_ += (p == 0) ? 1 : 2;
        }
      }
  }

  if (opts_.pad_fast) {
    const std::size_t f1 = fast_fft_length(m1), f2 = fast_fft_length(m2);
    Spectrum ps = embedding_spectrum(grid_, first_col_, f1, f2);
    matvec_ = std::make_unique<CirculantPlan>(grid_, f1, f2, std::move(ps.eig));
  } else {
    matvec_ = std::make_unique<CirculantPlan>(grid_, m1, m2, eig_raw_);
  }
}

BttbOperator::~BttbOperator() = default;
BttbOperator::BttbOperator(BttbOperator&&) noexcept = default;
BttbOperator& BttbOperator::operator=(BttbOperator&&) noexcept = default;

BttbOperator BttbOperator::matern(const GridSpec& grid, const MaternSpec& spec,
                                  const EmbeddingOptions& opts) {
  return BttbOperator(grid, first_column(grid, spec), opts,
                      SpectrumKind::covariance);
}

BttbOperator BttbOperator::matern_derivative(const GridSpec& grid,
                                             const MaternSpec& spec,
                                             KernelTerm term,
                                             const EmbeddingOptions& opts) {
  return BttbOperator(grid, first_column(grid, spec, term), opts,
                      SpectrumKind::derivative);
}

double BttbOperator::eigenvalue(std::size_t p, std::size_t q,
                                bool clamped) const {
  const std::size_t m1 = embed_n1(), m2 = embed_n2();
  if (p >= m1 || q >= m2) throw InputError("frequency index out of range");
  const std::size_t half = m1 / 2 + 1;
  if (p >= half) {
    // Hermitian symmetry of the real transform; the spectrum is also even
    // in q, but use the general mirror for safety.
    p = m1 - p;
    q = (m2 - q) % m2;
  }
  const auto& e = clamped ? eig_clamped_ : eig_raw_;
  return e[static_cast<Eigen::Index>(q * half + p)];
}

void BttbOperator::apply(std::span<const double> v,
                         std::span<double> out) const {
  if (v.size() != size() || out.size() != size())
    throw InputError("BTTB matvec dimension mismatch");
  matvec_->apply(v, out);
}

Eigen::VectorXd BttbOperator::apply(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != size())
    throw InputError("BTTB matvec dimension mismatch");
  Eigen::VectorXd out(v.size());
  matvec_->apply({v.data(), size()}, {out.data(), size()});
  return out;
}

void BttbOperator::require_usable(const char* context) const {
  if (kind_ != SpectrumKind::covariance) return;
  if (max_raw_ <= 0.0 || clamp_fraction() > opts_.max_clamp_fraction) {
    throw EmbeddingError(
        std::string(context) + ": circulant embedding not positive definite (" +
            std::to_string(clamp_count_) + " of " +
            std::to_string(spectrum_size()) + " eigenvalues clamped, min " +
            std::to_string(min_raw_) + ")",
        clamp_count_, spectrum_size());
  }
}

double logdet(const BttbOperator& op) {
  op.require_usable("logdet");
  const std::size_t n1 = op.grid().n1(), n2 = op.grid().n2();
  const std::size_t half = op.embed_n1() / 2 + 1;  // == n1
  double sum = 0.0;
  for (std::size_t q = 0; q < n2; ++q)
    for (std::size_t p = 0; p < n1; ++p)
      sum += std::log(op.eig_clamped_[static_cast<Eigen::Index>(q * half + p)]);
  return sum;
}

double dlogdet_drho(const BttbOperator& op, const BttbOperator& dop) {
  if (!(op.grid() == dop.grid()))
    throw InputError("dlogdet_drho: operators live on different grids");
  op.require_usable("dlogdet_drho");
  const std::size_t n1 = op.grid().n1(), n2 = op.grid().n2();
  const std::size_t half = op.embed_n1() / 2 + 1;
  double sum = 0.0;
  for (std::size_t q = 0; q < n2; ++q)
    for (std::size_t p = 0; p < n1; ++p) {
      const auto i = static_cast<Eigen::Index>(q * half + p);
      sum += dop.eig_raw_[i] / op.eig_clamped_[i];
    }
  return sum;
}

Eigen::VectorXd sample_gaussian(const BttbOperator& op, std::uint64_t seed,
                                std::uint64_t stream) {
  op.require_usable("sample_gaussian");
  const std::size_t m1 = op.embed_n1(), m2 = op.embed_n2();
  const std::size_t half = m1 / 2 + 1;
  const std::size_t n1 = op.grid().n1(), n2 = op.grid().n2();
  const PlanPair& pp = plans_for(m1, m2);

  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto re = alloc_real(m1 * m2);
  auto cx = alloc_complex(half * m2);
  for (std::size_t i = 0; i < m1 * m2; ++i) re[i] = normal(rng);
  // x = F^{-1} diag(sqrt(eig)) F eps; the embedding is real and even so this
  // symmetric square root of the circulant is real.
  fftw_execute_dft_r2c(pp.forward, re.get(), cx.get());
  const double scale = 1.0 / static_cast<double>(m1 * m2);
  for (std::size_t i = 0; i < half * m2; ++i) {
    const double f =
        std::sqrt(op.eig_clamped_[static_cast<Eigen::Index>(i)]) * scale;
    cx[i][0] *= f;
    cx[i][1] *= f;
  }
  fftw_execute_dft_c2r(pp.backward, cx.get(), re.get());
  Eigen::VectorXd x(static_cast<Eigen::Index>(n1 * n2));
  for (std::size_t i2 = 0; i2 < n2; ++i2)
    for (std::size_t i1 = 0; i1 < n1; ++i1)
      x[static_cast<Eigen::Index>(i1 + n1 * i2)] = re[i1 + m1 * i2];
  return x;
}

double dense_logdet(const GridSpec& grid, const Eigen::VectorXd& first_col) {
  const Eigen::MatrixXd m = dense_from_first_column(grid, first_col);
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw EmbeddingError("dense_logdet: matrix is not positive definite", 0,
                         grid.size());
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace kryging
