#include "kryging/app/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kryging::app {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& tok, const std::string& what) {
  const std::string t = trim(tok);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw InputError(what + ": '" + t + "' is not a number");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void RunConfig::validate() const {
  parse_grid_size(grid);
  if (k < 1) throw InputError("k must be >= 1");
  if (B < 1) throw InputError("B must be >= 1");
  if (!(tol > 0.0)) throw InputError("tol must be positive");
  if (max_iter < 1) throw InputError("max-iter must be >= 1");
  if (!(nu > 0.0)) throw InputError("nu must be positive");
  if (hessian != "rank-one" && hessian != "full")
    throw InputError("hessian must be rank-one or full");
  if (!(clamp_floor > 0.0 && clamp_floor < 1.0))
    throw InputError("clamp-floor must lie in (0, 1)");
  if (!(max_clamp_fraction >= 0.0 && max_clamp_fraction <= 1.0))
    throw InputError("max-clamp-fraction must lie in [0, 1]");
}

EmbeddingOptions RunConfig::embedding() const {
  EmbeddingOptions e;
  e.clamp_floor_rel = clamp_floor;
  e.max_clamp_fraction = max_clamp_fraction;
  return e;
}

FitOptions RunConfig::fit_options(std::size_t q) const {
  FitOptions fo;
  fo.k = k;
  fo.reorthogonalize = reorthogonalize;
  fo.embedding = embedding();
  fo.hessian = hessian == "full" ? HessianModel::full_approx : HessianModel::rank_one;
  fo.max_iter = max_iter;
  fo.tol = tol;
  fo.starts = parse_init(init, q);
  return fo;
}

std::pair<std::size_t, std::size_t> parse_grid_size(const std::string& s) {
  const auto x = s.find_first_of("xX");
  auto num = [&](std::string_view t) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
      throw InputError("grid must look like N1xN2, got '" + s + "'");
    return v;
  };
  if (x == std::string::npos) throw InputError("grid must look like N1xN2, got '" + s + "'");
  const std::string_view sv(s);
  const auto n1 = num(sv.substr(0, x)), n2 = num(sv.substr(x + 1));
  if (n1 < 2 || n2 < 2) throw InputError("grid needs at least 2 nodes per axis");
  return {n1, n2};
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split(s, ',')) out.push_back(to_double(tok, "number list"));
  return out;
}

std::vector<ThetaParams> parse_init(const std::string& s, std::size_t q) {
  if (trim(s) == "auto" || trim(s).empty()) return {};
  std::vector<ThetaParams> starts;
  for (const auto& part : split(s, ';')) {
    const auto v = parse_doubles(part);
    if (v.size() != q + 3)
      throw InputError("init start '" + trim(part) + "' needs " +
                       std::to_string(q + 3) + " values (beta x" +
                       std::to_string(q) + ", sigma2, tau2, rho)");
    ThetaParams t;
    t.beta = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(q));
    t.sigma2 = v[q];
    t.tau2 = v[q + 1];
    t.rho = v[q + 2];
    t.validate();
    starts.push_back(t);
  }
  return starts;
}

GridSpec resolve_grid(const std::string& size, const std::string& extent,
                      std::span<const Location> locations) {
  const auto [n1, n2] = parse_grid_size(size);
  if (trim(extent) != "auto") {
    const auto v = parse_doubles(extent);
    if (v.size() != 4) throw InputError("extent must be auto or x0,x1,y0,y1");
    if (!(v[1] > v[0] && v[3] > v[2])) throw InputError("extent is empty");
    return GridSpec(n1, n2, v[0], v[1], v[2], v[3]);
  }
  if (locations.empty())
    throw InputError("extent auto needs at least one location");
  if (n1 < 4 || n2 < 4)
    throw InputError("extent auto needs at least 4 nodes per axis");
  double x0 = locations[0].x, x1 = x0, y0 = locations[0].y, y1 = y0;
  for (const auto& l : locations) {
    x0 = std::min(x0, l.x);
    x1 = std::max(x1, l.x);
    y0 = std::min(y0, l.y);
    y1 = std::max(y1, l.y);
  }
  // n nodes spanning [min - d, max + d] with spacing d: d = (max - min) / (n - 3).
  auto expand = [](double lo, double hi, std::size_t n) {
    double span = hi - lo;
    if (!(span > 0.0)) span = std::max(1.0, std::abs(lo));  // degenerate axis
    const double d = span / static_cast<double>(n - 3);
    const double mid = 0.5 * (lo + hi);
    return std::pair{mid - 0.5 * span - d, mid + 0.5 * span + d};
  };
  const auto [a0, a1] = expand(x0, x1, n1);
  const auto [b0, b1] = expand(y0, y1, n2);
  return GridSpec(n1, n2, a0, a1, b0, b1);
}

void check_coverage(std::span<const Location> locations, const GridSpec& grid,
                    const std::string& source) {
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < locations.size(); ++i)
    if (!grid.contains(locations[i].x, locations[i].y)) bad.push_back(i);
  if (bad.empty()) return;
  std::ostringstream os;
  os << source << ": " << bad.size() << " location(s) outside the grid ["
     << grid.x_min() << ", " << grid.x_max() << "] x [" << grid.y_min() << ", "
     << grid.y_max() << "]; rows";
  const std::size_t shown = std::min<std::size_t>(bad.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) os << (i ? ", " : " ") << bad[i] + 1;
  if (shown < bad.size()) os << ", ...";
  throw InputError(os.str());
}

std::vector<std::string> config_file_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw InputError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw InputError(path + ":" + std::to_string(lineno) + ": empty key");
    if (key == "config")
      throw InputError(path + ":" + std::to_string(lineno) + ": config files do not nest");
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

}  // namespace kryging::app
