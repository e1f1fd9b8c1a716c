#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shimcp/solver.hpp"

namespace shimcp {

struct TrueTerm {
  Pattern pattern;
  double coefficient = 0.0;
};

struct SyntheticSpec {
  int n = 0;
  int m = 0;
  double zeta = 0.0;  // design sparsity; entries are Bernoulli(1 - zeta)
  std::vector<TrueTerm> true_terms;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  Eigen::MatrixXd Z;  // n x m, entries in {0,1}
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::string provenance;

  int n() const { return static_cast<int>(Z.rows()); }
  int m() const { return static_cast<int>(Z.cols()); }
};

// 2.0 (z1 + z1z2 + z1z2z3 + z1z3z4z5 + z1z2z3z4z5): the fifth-order demo
// model used by the synthetic benchmarks.
std::vector<TrueTerm> fifth_order_demo_model();
// coef * (z1 + z1z2 + z1z2z3), the strong/weak signal variants.
std::vector<TrueTerm> third_order_demo_model(double coefficient);

// Bit-reproducible under (seed, spec): Z is filled row-major from one counter
// stream, then y_i = sum_terms coef * prod z + sigma * normal.
Dataset generate(const SyntheticSpec& spec);

// Column expansion rules for non-binary CSV columns.
struct ThresholdBin {
  std::string label;
  std::optional<double> min;  // inclusive
  std::optional<double> max;  // inclusive
  bool matches(double v) const {
    return (!min || v >= *min) && (!max || v <= *max);
  }
};

struct ColumnRule {
  enum class Kind { Binary, OneHot, Thresholds, Drop };
  Kind kind = Kind::Binary;
  std::vector<std::string> categories;  // OneHot
  std::vector<ThresholdBin> bins;       // Thresholds
};

struct Schema {
  std::string response;
  std::map<std::string, ColumnRule> columns;

  static Schema from_json_file(const std::string& path);
};

// Without a schema every feature column must be exactly 0/1 and the response
// is `response_override`, else a column named "y", else the last column.
// Missing values and non-binary values without a rule raise SchemaError with
// the offending row and column.
Dataset load_csv(const std::string& path, const Schema* schema = nullptr,
                 const std::string& response_override = "");

void save_csv(const Dataset& dataset, const std::string& path,
              const std::string& response_name = "y");

// max_l |x_l^T y| over the order-capped pattern space, by pruned search.
double lambda_max(const Dataset& dataset, int max_order);

// 10 log-spaced values in (0, lambda_max/10], descending, spanning two
// decades.
std::vector<double> default_lambda_grid(double lambda_max_value);

struct CvCell {
  double lambda = 0.0;
  int fold = 0;
  double mse = 0.0;
  bool ok = false;
  std::string error;
};

struct CvResult {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_mse;  // aligned with grid; NaN when no fold succeeded
  std::vector<CvCell> table;
};

// K-fold cross validation over the grid (default grid when empty);
// deterministic fold assignment under seed. Fit failures flag their cell and
// the winner is chosen over valid cells.
CvResult select_lambda(const Dataset& dataset, int folds, const FitConfig& base,
                       std::vector<double> grid = {}, std::uint64_t seed = 0,
                       int workers = 1);

}  // namespace shimcp
