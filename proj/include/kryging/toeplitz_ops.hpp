#ifndef KRYGING_TOEPLITZ_OPS_HPP
#define KRYGING_TOEPLITZ_OPS_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "kryging/grid_cov.hpp"

namespace kryging {

/// Circulant embedding could not be made usable (too many eigenvalues had to
/// be clamped). The CLI maps this to exit code 3.
class EmbeddingError : public std::runtime_error {
 public:
  EmbeddingError(const std::string& what, std::size_t clamp_count,
                 std::size_t total)
      : std::runtime_error(what), clamp_count_(clamp_count), total_(total) {}
  std::size_t clamp_count() const { return clamp_count_; }
  std::size_t total() const { return total_; }

 private:
  std::size_t clamp_count_, total_;
};

struct EmbeddingOptions {
  // Matvecs run on an embedding padded to FFT-friendly lengths. Lattice
  // values are unchanged; log-determinants and sampling always use the
  // (2n1-1) x (2n2-1) embedding.
  bool pad_fast = false;
  // Eigenvalues below clamp_floor_rel * max(eig) are reset to that floor.
  double clamp_floor_rel = 1e-12;
  // Fraction of clamped eigenvalues above which logdet/sampling fail.
  double max_clamp_fraction = 0.05;
};

/// How the embedding spectrum is post-processed.
enum class SpectrumKind {
  covariance,  // positive definite target: clamp small/negative eigenvalues
  derivative,  // signed (e.g. d/drho of a covariance): keep raw eigenvalues
};

class CirculantPlan;

/// Symmetric BTTB matrix held as its first lattice column plus the cached
/// eigenvalues of its block-circulant embedding.
///
/// The embedding has dimensions (2n1-1) x (2n2-1). Its eigenvalues are real
/// because the embedded kernel is even along each axis; only the half
/// spectrum produced by a real-to-complex transform is stored.
class BttbOperator {
 public:
  BttbOperator(const GridSpec& grid, Eigen::VectorXd first_col,
               const EmbeddingOptions& opts = {},
               SpectrumKind kind = SpectrumKind::covariance);
  ~BttbOperator();
  BttbOperator(BttbOperator&&) noexcept;
  BttbOperator& operator=(BttbOperator&&) noexcept;
  BttbOperator(const BttbOperator&) = delete;
  BttbOperator& operator=(const BttbOperator&) = delete;

  /// Correlation (or covariance) operator for a Matern kernel on `grid`.
  static BttbOperator matern(const GridSpec& grid, const MaternSpec& spec,
                             const EmbeddingOptions& opts = {});
  /// d/drho (or d2/drho2) of the Matern operator; spectrum left unclamped.
  static BttbOperator matern_derivative(const GridSpec& grid,
                                        const MaternSpec& spec,
                                        KernelTerm term = KernelTerm::drho,
                                        const EmbeddingOptions& opts = {});

  const GridSpec& grid() const { return grid_; }
  const Eigen::VectorXd& first_col() const { return first_col_; }
  std::size_t size() const { return grid_.size(); }
  std::size_t embed_n1() const { return 2 * grid_.n1() - 1; }
  std::size_t embed_n2() const { return 2 * grid_.n2() - 1; }
  SpectrumKind kind() const { return kind_; }
  const EmbeddingOptions& options() const { return opts_; }

  /// Eigenvalue of the embedding at frequency (p, q), 0 <= p < 2n1-1,
  /// 0 <= q < 2n2-1. `clamped` selects the post-clamping value.
  double eigenvalue(std::size_t p, std::size_t q, bool clamped = true) const;

  std::size_t clamp_count() const { return clamp_count_; }
  std::size_t spectrum_size() const { return embed_n1() * embed_n2(); }
  double clamp_fraction() const {
    return static_cast<double>(clamp_count_) /
           static_cast<double>(spectrum_size());
  }
  double min_raw_eigenvalue() const { return min_raw_; }
  double max_raw_eigenvalue() const { return max_raw_; }
  /// Largest |imag| / max|eig| seen in the transform of the embedding.
  double imag_residue() const { return imag_residue_; }

  /// y = Sigma * v. Exact BTTB product (raw, unclamped spectrum).
  void apply(std::span<const double> v, std::span<double> out) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;

  /// Throws EmbeddingError when the clamp fraction exceeds the threshold.
  void require_usable(const char* context) const;

 private:
  friend double logdet(const BttbOperator&);
  friend double dlogdet_drho(const BttbOperator&, const BttbOperator&);
  friend Eigen::VectorXd sample_gaussian(const BttbOperator&, std::uint64_t,
                                         std::uint64_t);

  GridSpec grid_;
  Eigen::VectorXd first_col_;
  EmbeddingOptions opts_;
  SpectrumKind kind_;
  // Half spectrum of the (2n1-1)x(2n2-1) embedding, layout [q][p],
  // p in [0, n1), q in [0, 2n2-1).
  Eigen::VectorXd eig_raw_;
  Eigen::VectorXd eig_clamped_;
  std::size_t clamp_count_ = 0;
  double min_raw_ = 0.0, max_raw_ = 0.0, imag_residue_ = 0.0;
  // Matvec plan; a padded embedding when opts_.pad_fast is set.
  std::unique_ptr<CirculantPlan> matvec_;
};

/// Circulant log-determinant approximation: the sum of log eigenvalues of the
/// embedding over the n1 x n2 leading frequencies (p < n1, q < n2).
double logdet(const BttbOperator& op);

/// trace(D1^{-1} D2) over the same frequency subset as logdet, where D1 is the
/// spectrum of `op` and D2 that of the derivative operator `dop`.
double dlogdet_drho(const BttbOperator& op, const BttbOperator& dop);

/// One draw from N(0, Sigma) on the lattice by circulant embedding.
/// Deterministic in (seed, stream).
Eigen::VectorXd sample_gaussian(const BttbOperator& op, std::uint64_t seed,
                                std::uint64_t stream = 0);

/// Exact log-determinant by dense Cholesky; small grids only.
double dense_logdet(const GridSpec& grid, const Eigen::VectorXd& first_col);

/// Smallest m >= n whose only prime factors are 2, 3 and 5.
std::size_t fast_fft_length(std::size_t n);

}  // namespace kryging

#endif  // KRYGING_TOEPLITZ_OPS_HPP
