#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gpbart/design.hpp"
#include "gpbart/sampler.hpp"

namespace gpbart {

struct Schema {
  std::string target;
  std::vector<std::string> names;  // feature columns in file order
  std::vector<ColumnKind> kinds;
  std::vector<std::vector<std::string>> levels;  // dictionary per categorical column

  int index_of(const std::string& name) const;  // -1 when absent
  bool operator==(const Schema&) const = default;
};

struct Dataset {
  Schema schema;
  Eigen::MatrixXd x;  // categorical columns hold level codes
  Eigen::VectorXd y;  // empty when the file has no target column
  std::vector<std::string> rejected;  // one diagnostic per rejected row

  Eigen::Index rows() const { return x.rows(); }
};

// Reads a CSV with a header row. Lines starting with '#' are skipped. Rows
// with a missing or unparseable cell are rejected and reported by line
// number; an empty result is an error. Columns in `ignore` are dropped.
Dataset load_csv(const std::string& path, const std::string& target,
                 const std::vector<std::string>& categorical,
                 const std::vector<std::string>& ignore = {});

// Reads a CSV against a training schema: feature columns are matched by
// name and categorical levels encoded with the training dictionary (unseen
// levels become -1). The target column is read when present.
Dataset load_csv(const std::string& path, const Schema& schema);

struct NormalizationTransform {
  std::vector<double> x_min, x_max;  // per column; unused for categorical
  std::vector<ColumnKind> kinds;
  double y_min = 0.0, y_max = 1.0;

  // Min-max statistics from training data. Throws naming any constant
  // continuous column or a constant response.
  static NormalizationTransform fit(const Dataset& train);

  Eigen::MatrixXd apply_x(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd apply_y(const Eigen::VectorXd& y) const;
  Eigen::VectorXd inverse_y(const Eigen::VectorXd& z) const;
  double inverse_y(double z) const { return (z + 0.5) * (y_max - y_min) + y_min; }
  double y_scale() const { return y_max - y_min; }
  Eigen::MatrixXd inverse_x(const Eigen::MatrixXd& u) const;

  bool operator==(const NormalizationTransform&) const = default;
};

// Normalized copy of the dataset and the transform that produced it.
std::pair<NormalizationTransform, Dataset> fit_transform(const Dataset& train);

// Sampler design from a normalized dataset. Empty column lists default to
// all continuous columns; categorical columns are rejected in either list.
Design make_design(const Dataset& normalized, const std::vector<std::string>& gp_columns = {},
                   const std::vector<std::string>& rotation_columns = {});

struct FittedModel {
  PosteriorDraws posterior;
  NormalizationTransform transform;
  Schema schema;
  std::uint64_t config_hash = 0;
};

inline constexpr int kFormatVersion = 1;

// FNV-1a of a string, finalized with mix64.
std::uint64_t hash_string(std::string_view s);

// Stable hash of the hyperparameters, variant and seed.
std::uint64_t config_hash(const Hyperparams& hp, Variant variant, std::uint64_t seed);

// JSON-lines stream: one header record, one record per retained draw and a
// trailer carrying the draw count.
void save_draws(const FittedModel& model, std::ostream& os);
void save_draws(const FittedModel& model, const std::string& path);
FittedModel load_draws(std::istream& is);
FittedModel load_draws(const std::string& path);

}  // namespace gpbart
