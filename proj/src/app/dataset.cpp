#include "kryging/app/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace kryging::app {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  std::string out(s.substr(a, b - a));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"')
    out = out.substr(1, out.size() - 2);
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(
        start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool is_missing(const std::string& s) {
  const auto l = lower(s);
  return l.empty() || l == "na" || l == "nan";
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

[[noreturn]] void fail(const std::string& source, std::size_t line,
                       const std::string& msg) {
  throw InputError(source + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset d;
  d.intercept = intercept;
  d.covariate_names = covariate_names;
  d.locations.reserve(rows.size());
  d.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  if (y.size() > 0) d.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    d.locations.push_back(locations[rows[i]]);
    d.X.row(static_cast<Eigen::Index>(i)) = X.row(r);
    if (y.size() > 0) d.y[static_cast<Eigen::Index>(i)] = y[r];
  }
  return d;
}

Dataset parse_csv(std::istream& in, const CsvOptions& opts,
                  const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    header = split(line);
    break;
  }
  if (header.empty()) {
    if (opts.allow_empty && !opts.require_response) return Dataset{};
    throw InputError(source + ": no observations");
  }

  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto key = lower(name);
    for (std::size_t j = 0; j < header.size(); ++j)
      if (lower(header[j]) == key) return j;
    return std::nullopt;
  };
  const auto lon = find_col("lon"), lat = find_col("lat");
  if (!lon || !lat)
    fail(source, lineno, "header must contain 'lon' and 'lat' columns");
  const auto ycol = find_col(opts.response);
  if (opts.require_response && !ycol)
    fail(source, lineno, "response column '" + opts.response + "' not found");

  std::vector<std::size_t> xcols;
  std::vector<std::string> names;
  if (opts.intercept) names.push_back("(intercept)");
  if (!opts.covariates.empty()) {
    for (const auto& c : opts.covariates) {
      const auto j = find_col(c);
      if (!j) throw InputError(source + ": covariate column '" + c +
                               "' not found in header");
      xcols.push_back(*j);
      names.push_back(header[*j]);
    }
  } else if (opts.all_covariates) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == *lon || j == *lat || (ycol && j == *ycol)) continue;
      xcols.push_back(j);
      names.push_back(header[j]);
    }
  }

  std::vector<Location> locs;
  std::vector<double> ys, xs;
  std::size_t skipped = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size())
      fail(source, lineno,
           "expected " + std::to_string(header.size()) + " fields, got " +
               std::to_string(f.size()));
    auto num = [&](std::size_t j) {
      const auto v = parse_number(f[j]);
      if (!v)
        fail(source, lineno,
             "column '" + header[j] + "': not a finite number '" + f[j] + "'");
      return *v;
    };
    if (ycol && opts.skip_missing_response && is_missing(f[*ycol])) {
      ++skipped;
      continue;
    }
    locs.push_back({num(*lon), num(*lat)});
    if (ycol) ys.push_back(num(*ycol));
    for (std::size_t j : xcols) xs.push_back(num(j));
  }
  if (locs.empty() && !opts.allow_empty)
    throw InputError(source + ": no observations");

  Dataset d;
  d.intercept = opts.intercept;
  d.covariate_names = names;
  d.locations = std::move(locs);
  const auto p = static_cast<Eigen::Index>(d.locations.size());
  const auto qx = static_cast<Eigen::Index>(xcols.size());
  const Eigen::Index off = opts.intercept ? 1 : 0;
  d.X.resize(p, qx + off);
  if (opts.intercept) d.X.col(0).setOnes();
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < qx; ++j)
      d.X(i, j + off) = xs[static_cast<std::size_t>(i * qx + j)];
  if (ycol) d.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), p);
  if (opts.require_response && d.X.cols() == 0)
    throw InputError(source + ": model has no covariates and no intercept");
  return d;
}

Dataset read_csv(const std::string& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_csv(in, opts, path);
}

void write_csv(std::ostream& out, const Dataset& d) {
  const Eigen::Index off = d.intercept ? 1 : 0;
  out << "lon,lat";
  if (d.y.size() > 0) out << ",y";
  for (std::size_t j = static_cast<std::size_t>(off); j < d.covariate_names.size(); ++j)
    out << ',' << d.covariate_names[j];
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << d.locations[i].x << ',' << d.locations[i].y;
    if (d.y.size() > 0) out << ',' << d.y[r];
    for (Eigen::Index j = off; j < d.X.cols(); ++j) out << ',' << d.X(r, j);
    out << '\n';
  }
}

void write_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  write_csv(out, d);
}

}  // namespace kryging::app
