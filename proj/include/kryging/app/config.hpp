#ifndef KRYGING_APP_CONFIG_HPP
#define KRYGING_APP_CONFIG_HPP

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kryging/estimation.hpp"

namespace kryging::app {

/// Settings shared by the subcommands. Every field is a CLI flag and a config
/// file key of the same name.
struct RunConfig {
  std::string grid = "100x100";  // N1xN2
  std::string extent = "auto";   // auto | x0,x1,y0,y1
  double nu = 0.5;
  std::size_t k = 50;
  std::size_t B = 20;
  std::uint64_t seed = 1;
  std::string init = "auto";  // auto | start[;start...], start = beta...,sigma2,tau2,rho
  double tol = 1e-6;
  std::size_t max_iter = 200;
  std::string hessian = "rank-one";  // rank-one | full
  bool reorthogonalize = false;
  double clamp_floor = 1e-12;
  double max_clamp_fraction = 0.05;
  std::size_t threads = 0;
  std::string out;

  void validate() const;
  /// Optimizer settings; `q` is the number of regression coefficients.
  FitOptions fit_options(std::size_t q) const;
  EmbeddingOptions embedding() const;
};

/// "100x80" -> (100, 80).
std::pair<std::size_t, std::size_t> parse_grid_size(const std::string& s);

/// Comma-separated doubles.
std::vector<double> parse_doubles(const std::string& s);

/// "auto" or semicolon-separated starts, each beta_1..beta_q,sigma2,tau2,rho.
std::vector<ThetaParams> parse_init(const std::string& s, std::size_t q);

/// Latent grid for the requested size. "auto" takes the bounding box of the
/// locations expanded by one spacing on each side.
GridSpec resolve_grid(const std::string& size, const std::string& extent,
                      std::span<const Location> locations);

/// Throws listing the offending rows (1-based data rows) if any location lies
/// outside the grid.
void check_coverage(std::span<const Location> locations, const GridSpec& grid,
                    const std::string& source);

/// Reads flat `key = value` lines ('#' starts a comment) and returns them as
/// `--key=value` arguments.
std::vector<std::string> config_file_args(const std::string& path);

}  // namespace kryging::app

#endif  // KRYGING_APP_CONFIG_HPP
