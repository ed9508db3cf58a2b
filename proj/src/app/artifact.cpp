#include "kryging/app/artifact.hpp"

#include <fstream>

#include <json.hpp>

namespace kryging::app {

namespace {

using nlohmann::json;

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

ModelData FitArtifact::model() const {
  return ModelData{grid, build_map(train.locations, grid), train.y, train.X, nu};
}

void write_artifact(std::ostream& out, const FitArtifact& a) {
  json j;
  j["format"] = "kryging-fit";
  j["version"] = FitArtifact::kVersion;
  j["grid"] = {{"n1", a.grid.n1()},       {"n2", a.grid.n2()},
               {"x_min", a.grid.x_min()}, {"x_max", a.grid.x_max()},
               {"y_min", a.grid.y_min()}, {"y_max", a.grid.y_max()}};
  j["nu"] = a.nu;
  j["theta"] = {{"beta", to_vec(a.theta.beta)},
                {"sigma2", a.theta.sigma2},
                {"tau2", a.theta.tau2},
                {"rho", a.theta.rho}};
  j["options"] = {{"k", a.k},
                  {"reorthogonalize", a.reorthogonalize},
                  {"clamp_floor", a.embedding.clamp_floor_rel},
                  {"max_clamp_fraction", a.embedding.max_clamp_fraction}};
  j["covariates"] = a.train.covariate_names;
  j["intercept"] = a.train.intercept;
  const auto& d = a.diagnostics;
  j["diagnostics"] = {{"objective", d.objective},
                      {"iterations", d.iterations},
                      {"evaluations", d.evaluations},
                      {"converged", d.converged},
                      {"stop_reason", d.stop_reason},
                      {"k_effective", d.k_effective},
                      {"clamp_count", d.clamp_count},
                      {"grad_norm", d.grad_norm},
                      {"wall_seconds", d.wall_seconds},
                      {"objective_trace", d.objective_trace}};
  std::vector<double> lon, lat;
  for (const auto& l : a.train.locations) {
    lon.push_back(l.x);
    lat.push_back(l.y);
  }
  json X = json::array();
  for (Eigen::Index c = 0; c < a.train.X.cols(); ++c)
    X.push_back(to_vec(a.train.X.col(c)));
  j["train"] = {{"lon", lon}, {"lat", lat}, {"y", to_vec(a.train.y)}, {"X", X}};
  j["x_hat"] = to_vec(a.x_hat);
  out << j.dump() << '\n';
}

void write_artifact(const std::string& path, const FitArtifact& a) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  write_artifact(out, a);
  if (!out) throw InputError("error writing '" + path + "'");
}

FitArtifact read_artifact(std::istream& in, const std::string& source) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(source + ": not a fit artifact (" + e.what() + ")");
  }
  if (!j.is_object() || j.value("format", "") != "kryging-fit")
    throw InputError(source + ": not a fit artifact");
  const int version = j.value("version", 0);
  if (version != FitArtifact::kVersion)
    throw InputError(source + ": unsupported artifact version " + std::to_string(version));
  try {
    FitArtifact a;
    const auto& g = j.at("grid");
    a.grid = GridSpec(g.at("n1").get<std::size_t>(), g.at("n2").get<std::size_t>(),
                      g.at("x_min").get<double>(), g.at("x_max").get<double>(),
                      g.at("y_min").get<double>(), g.at("y_max").get<double>());
    a.nu = j.at("nu").get<double>();
    const auto& t = j.at("theta");
    a.theta.beta = from_vec(t.at("beta").get<std::vector<double>>());
    a.theta.sigma2 = t.at("sigma2").get<double>();
    a.theta.tau2 = t.at("tau2").get<double>();
    a.theta.rho = t.at("rho").get<double>();
    a.theta.validate();
    const auto& o = j.at("options");
    a.k = o.at("k").get<std::size_t>();
    a.reorthogonalize = o.at("reorthogonalize").get<bool>();
    a.embedding.clamp_floor_rel = o.at("clamp_floor").get<double>();
    a.embedding.max_clamp_fraction = o.at("max_clamp_fraction").get<double>();
    a.train.covariate_names = j.at("covariates").get<std::vector<std::string>>();
    a.train.intercept = j.at("intercept").get<bool>();
    const auto& d = j.at("diagnostics");
    a.diagnostics.objective = d.at("objective").get<double>();
    a.diagnostics.iterations = d.at("iterations").get<std::size_t>();
    a.diagnostics.evaluations = d.at("evaluations").get<std::size_t>();
    a.diagnostics.converged = d.at("converged").get<bool>();
    a.diagnostics.stop_reason = d.at("stop_reason").get<std::string>();
    a.diagnostics.k_effective = d.at("k_effective").get<std::size_t>();
    a.diagnostics.clamp_count = d.at("clamp_count").get<std::size_t>();
    a.diagnostics.grad_norm = d.at("grad_norm").get<double>();
    a.diagnostics.wall_seconds = d.at("wall_seconds").get<double>();
    a.diagnostics.objective_trace = d.at("objective_trace").get<std::vector<double>>();
    const auto& tr = j.at("train");
    const auto lon = tr.at("lon").get<std::vector<double>>();
    const auto lat = tr.at("lat").get<std::vector<double>>();
    a.train.y = from_vec(tr.at("y").get<std::vector<double>>());
    const auto cols = tr.at("X").get<std::vector<std::vector<double>>>();
    const auto p = lon.size();
    if (lat.size() != p || static_cast<std::size_t>(a.train.y.size()) != p)
      throw InputError(source + ": training columns differ in length");
    for (std::size_t i = 0; i < p; ++i) a.train.locations.push_back({lon[i], lat[i]});
    a.train.X.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (cols[c].size() != p) throw InputError(source + ": covariate column length mismatch");
      a.train.X.col(static_cast<Eigen::Index>(c)) = from_vec(cols[c]);
    }
    if (cols.size() != a.train.covariate_names.size() ||
        static_cast<Eigen::Index>(cols.size()) != a.theta.beta.size())
      throw InputError(source + ": covariate count does not match beta");
    a.x_hat = from_vec(j.at("x_hat").get<std::vector<double>>());
    if (static_cast<std::size_t>(a.x_hat.size()) != a.grid.size())
      throw InputError(source + ": x_hat length does not match the grid");
    a.diagnostics.theta_hat = a.theta;
    return a;
  } catch (const json::exception& e) {
    throw InputError(source + ": malformed fit artifact (" + e.what() + ")");
  }
}

FitArtifact read_artifact(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_artifact(in, path);
}

}  // namespace kryging::app
