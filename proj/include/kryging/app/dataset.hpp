#ifndef KRYGING_APP_DATASET_HPP
#define KRYGING_APP_DATASET_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kryging/obs_map.hpp"

namespace kryging::app {

/// Point-referenced observations. X holds the intercept (when enabled) as its
/// first column followed by the selected covariates.
struct Dataset {
  std::vector<Location> locations;
  Eigen::VectorXd y;  // empty when the file carries no response column
  Eigen::MatrixXd X;
  std::vector<std::string> covariate_names;  // names of the X columns
  bool intercept = true;

  std::size_t size() const { return locations.size(); }
  bool has_response() const { return y.size() > 0 || locations.empty(); }
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct CsvOptions {
  // Covariate columns to use. When empty, every column other than lon, lat
  // and the response is used unless all_covariates is false.
  std::vector<std::string> covariates;
  bool all_covariates = true;
  bool intercept = true;
  // Response column name; matched case-insensitively like all headers.
  std::string response = "y";
  bool require_response = true;
  bool allow_empty = false;
  // Rows whose response is empty or NA are skipped instead of rejected.
  bool skip_missing_response = false;
};

/// Reads `lon,lat,y[,x1,...]` with a header row. Errors carry the source name
/// and 1-based line number.
Dataset parse_csv(std::istream& in, const CsvOptions& opts = {},
                  const std::string& source = "<input>");
Dataset read_csv(const std::string& path, const CsvOptions& opts = {});

/// Writes `lon,lat,y[,covariates...]`; the intercept column is implicit.
void write_csv(std::ostream& out, const Dataset& d);
void write_csv(const std::string& path, const Dataset& d);

}  // namespace kryging::app

#endif  // KRYGING_APP_DATASET_HPP
