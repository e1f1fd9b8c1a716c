#include "shimcp/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "shimcp/csv.hpp"
#include "shimcp/parallel.hpp"
#include "shimcp/rng.hpp"

namespace shimcp {

void SyntheticSpec::validate() const {
  if (n < 1 || m < 1) throw ConfigError("synthetic spec needs n >= 1 and m >= 1");
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw ConfigError("zeta must lie in [0, 1]");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");
  for (const auto& term : true_terms) term.pattern.validate(m);
}

std::vector<TrueTerm> fifth_order_demo_model() {
  return {
      {Pattern{1}, 2.0},
      {Pattern{1, 2}, 2.0},
      {Pattern{1, 2, 3}, 2.0},
      {Pattern{1, 3, 4, 5}, 2.0},
      {Pattern{1, 2, 3, 4, 5}, 2.0},
  };
}

std::vector<TrueTerm> third_order_demo_model(double coefficient) {
  return {
      {Pattern{1}, coefficient},
      {Pattern{1, 2}, coefficient},
      {Pattern{1, 2, 3}, coefficient},
  };
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  CounterRng rng(spec.seed);
  Dataset data;
  data.Z.resize(spec.n, spec.m);
  const double p_one = 1.0 - spec.zeta;
  for (int i = 0; i < spec.n; ++i) {
    for (int j = 0; j < spec.m; ++j) {
      data.Z(i, j) = rng.bernoulli(p_one) ? 1.0 : 0.0;
    }
  }
  data.y.resize(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    double mu = 0.0;
    for (const auto& term : spec.true_terms) {
      double prod = term.coefficient;
      for (int item : term.pattern.items) {
        prod *= data.Z(i, item - 1);
        if (prod == 0.0) break;
      }
      mu += prod;
    }
    data.y[i] = mu + spec.noise_sigma * rng.next_normal();
  }
  data.feature_names.reserve(static_cast<std::size_t>(spec.m));
  for (int j = 1; j <= spec.m; ++j) data.feature_names.push_back("z" + std::to_string(j));
  std::ostringstream prov;
  prov << "synthetic(n=" << spec.n << ",m=" << spec.m << ",zeta=" << spec.zeta
       << ",sigma=" << spec.noise_sigma << ",seed=" << spec.seed << ")";
  data.provenance = prov.str();
  return data;
}

namespace {

double parse_number(const std::string& field, int row, const std::string& column) {
  if (field.empty()) {
    throw SchemaError("missing value at row " + std::to_string(row) + ", column " + column);
  }
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw SchemaError("value '" + field + "' at row " + std::to_string(row) + ", column " +
                      column + " is not numeric");
  }
  if (used != field.size()) {
    throw SchemaError("value '" + field + "' at row " + std::to_string(row) + ", column " +
                      column + " is not numeric");
  }
  return v;
}

double parse_binary(const std::string& field, int row, const std::string& column) {
  double v = parse_number(field, row, column);
  if (v != 0.0 && v != 1.0) {
    throw SchemaError("value '" + field + "' at row " + std::to_string(row) + ", column " +
                      column + " is not binary and no expansion rule was declared");
  }
  return v;
}

}  // namespace

Schema Schema::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema file " + path + " is not valid JSON: " + e.what());
  }
  Schema schema;
  if (!doc.contains("response") || !doc["response"].is_string()) {
    throw SchemaError("schema must name a response column");
  }
  schema.response = doc["response"].get<std::string>();
  if (doc.contains("columns")) {
    for (const auto& [name, rule_json] : doc["columns"].items()) {
      ColumnRule rule;
      std::string kind = rule_json.value("type", "binary");
      if (kind == "binary") {
        rule.kind = ColumnRule::Kind::Binary;
      } else if (kind == "drop") {
        rule.kind = ColumnRule::Kind::Drop;
      } else if (kind == "onehot") {
        rule.kind = ColumnRule::Kind::OneHot;
        for (const auto& cat : rule_json.at("categories")) {
          rule.categories.push_back(cat.get<std::string>());
        }
        if (rule.categories.empty()) {
          throw SchemaError("onehot rule for column " + name + " lists no categories");
        }
      } else if (kind == "thresholds") {
        rule.kind = ColumnRule::Kind::Thresholds;
        for (const auto& bin_json : rule_json.at("bins")) {
          ThresholdBin bin;
          bin.label = bin_json.at("label").get<std::string>();
          if (bin_json.contains("min")) bin.min = bin_json["min"].get<double>();
          if (bin_json.contains("max")) bin.max = bin_json["max"].get<double>();
          rule.bins.push_back(std::move(bin));
        }
        if (rule.bins.empty()) {
          throw SchemaError("thresholds rule for column " + name + " lists no bins");
        }
      } else {
        throw SchemaError("unknown rule type '" + kind + "' for column " + name);
      }
      schema.columns[name] = std::move(rule);
    }
  }
  return schema;
}

Dataset load_csv(const std::string& path, const Schema* schema,
                 const std::string& response_override) {
  CsvTable table = read_csv_file(path);
  if (table.rows.empty()) throw SchemaError(path + " contains no data rows");

  std::string response = response_override;
  if (response.empty() && schema) response = schema->response;
  if (response.empty()) {
    response = table.column("y") >= 0 ? "y" : table.header.back();
  }
  int response_col = table.column(response);
  if (response_col < 0) {
    throw SchemaError("response column '" + response + "' not found in " + path);
  }

  const int n = static_cast<int>(table.rows.size());
  Dataset data;
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.y[i] = parse_number(table.rows[static_cast<std::size_t>(i)]
                                       [static_cast<std::size_t>(response_col)],
                             i, response);
  }

  std::vector<Eigen::VectorXd> feature_columns;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (static_cast<int>(j) == response_col) continue;
    const std::string& name = table.header[j];
    const ColumnRule* rule = nullptr;
    if (schema) {
      auto it = schema->columns.find(name);
      if (it != schema->columns.end()) rule = &it->second;
    }
    if (rule && rule->kind == ColumnRule::Kind::Drop) continue;

    if (!rule || rule->kind == ColumnRule::Kind::Binary) {
      Eigen::VectorXd col(n);
      for (int i = 0; i < n; ++i) {
        col[i] = parse_binary(table.rows[static_cast<std::size_t>(i)][j], i, name);
      }
      feature_columns.push_back(std::move(col));
      data.feature_names.push_back(name);
    } else if (rule->kind == ColumnRule::Kind::OneHot) {
      for (const auto& category : rule->categories) {
        Eigen::VectorXd col(n);
        for (int i = 0; i < n; ++i) {
          const std::string& field = table.rows[static_cast<std::size_t>(i)][j];
          if (field.empty()) {
            throw SchemaError("missing value at row " + std::to_string(i) + ", column " + name);
          }
          col[i] = field == category ? 1.0 : 0.0;
        }
        feature_columns.push_back(std::move(col));
        data.feature_names.push_back(name + ":" + category);
      }
    } else {  // Thresholds
      std::vector<double> values(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        values[static_cast<std::size_t>(i)] =
            parse_number(table.rows[static_cast<std::size_t>(i)][j], i, name);
      }
      for (const auto& bin : rule->bins) {
        Eigen::VectorXd col(n);
        for (int i = 0; i < n; ++i) {
          col[i] = bin.matches(values[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
        }
        feature_columns.push_back(std::move(col));
        data.feature_names.push_back(name + ":" + bin.label);
      }
    }
  }
  if (feature_columns.empty()) throw SchemaError(path + " yields no feature columns");

  data.Z.resize(n, static_cast<Eigen::Index>(feature_columns.size()));
  for (std::size_t j = 0; j < feature_columns.size(); ++j) {
    data.Z.col(static_cast<Eigen::Index>(j)) = feature_columns[j];
  }
  data.provenance = path;
  return data;
}

void save_csv(const Dataset& dataset, const std::string& path, const std::string& response_name) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write " + path);
  for (std::size_t j = 0; j < dataset.feature_names.size(); ++j) {
    if (j) out << ',';
    out << csv_escape(dataset.feature_names[j]);
  }
  out << ',' << csv_escape(response_name) << '\n';
  for (int i = 0; i < dataset.n(); ++i) {
    for (int j = 0; j < dataset.m(); ++j) {
      if (j) out << ',';
      double v = dataset.Z(i, j);
      if (v == 0.0) out << '0';
      else if (v == 1.0) out << '1';
      else out << format_double(v);
    }
    out << ',' << format_double(dataset.y[i]) << '\n';
  }
}

double lambda_max(const Dataset& dataset, int max_order) {
  CovariateMatrix Z(dataset.Z);
  auto probe = max_absolute_correlation(dataset.y, Z, max_order);
  return probe ? probe->correlation : 0.0;
}

std::vector<double> default_lambda_grid(double lambda_max_value) {
  std::vector<double> grid;
  if (!(lambda_max_value > 0.0)) return grid;
  double top = lambda_max_value / 10.0;
  for (int j = 0; j < 10; ++j) {
    grid.push_back(top * std::pow(10.0, -2.0 * j / 9.0));
  }
  return grid;
}

CvResult select_lambda(const Dataset& dataset, int folds, const FitConfig& base,
                       std::vector<double> grid, std::uint64_t seed, int workers) {
  if (folds < 2) throw ConfigError("cross validation needs at least 2 folds");
  if (dataset.n() < folds) throw ConfigError("fewer rows than folds");
  if (grid.empty()) grid = default_lambda_grid(lambda_max(dataset, base.max_order));
  if (grid.empty()) throw ConfigError("empty lambda grid (all covariates zero?)");

  // Deterministic fold assignment: Fisher-Yates shuffle, then round robin.
  std::vector<int> order(static_cast<std::size_t>(dataset.n()));
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.next_below(i)]);
  }
  std::vector<int> fold_of(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    fold_of[static_cast<std::size_t>(order[k])] = static_cast<int>(k % static_cast<std::size_t>(folds));
  }

  CvResult result;
  result.grid = grid;
  const int cells = static_cast<int>(grid.size()) * folds;
  result.table.resize(static_cast<std::size_t>(cells));

  parallel_for(cells, workers, [&](int cell) {
    const int gi = cell / folds;
    const int fold = cell % folds;
    CvCell& record = result.table[static_cast<std::size_t>(cell)];
    record.lambda = grid[static_cast<std::size_t>(gi)];
    record.fold = fold;
    std::vector<int> train_rows, held_rows;
    for (int i = 0; i < dataset.n(); ++i) {
      (fold_of[static_cast<std::size_t>(i)] == fold ? held_rows : train_rows).push_back(i);
    }
    try {
      Eigen::MatrixXd Ztr(train_rows.size(), dataset.m());
      Eigen::VectorXd ytr(train_rows.size());
      for (std::size_t r = 0; r < train_rows.size(); ++r) {
        Ztr.row(static_cast<Eigen::Index>(r)) = dataset.Z.row(train_rows[r]);
        ytr[static_cast<Eigen::Index>(r)] = dataset.y[train_rows[r]];
      }
      FitConfig cfg = base;
      cfg.lambda = record.lambda;
      CovariateMatrix train(Ztr);
      ModelState model = fit(train, ytr, cfg);
      double sse = 0.0;
      for (int row : held_rows) {
        double pred = 0.0;
        for (const auto& term : model.active) {
          double prod = term.beta;
          for (int item : term.pattern.items) {
            prod *= dataset.Z(row, item - 1);
            if (prod == 0.0) break;
          }
          pred += prod;
        }
        double err = dataset.y[row] - pred;
        sse += err * err;
      }
      record.mse = sse / static_cast<double>(held_rows.size());
      record.ok = true;
    } catch (const Error& e) {
      record.ok = false;
      record.error = e.what();
    }
  });

  result.mean_mse.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  double best = std::numeric_limits<double>::infinity();
  int best_index = -1;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    double sum = 0.0;
    int ok_count = 0;
    for (int fold = 0; fold < folds; ++fold) {
      const CvCell& cell = result.table[gi * static_cast<std::size_t>(folds) +
                                        static_cast<std::size_t>(fold)];
      if (cell.ok) {
        sum += cell.mse;
        ++ok_count;
      }
    }
    if (ok_count == 0) continue;
    double mean = sum / ok_count;
    result.mean_mse[gi] = mean;
    if (mean < best) {
      best = mean;
      best_index = static_cast<int>(gi);
    }
  }
  if (best_index < 0) throw Error(ErrorKind::Numeric, "every cross-validation cell failed");
  result.lambda = grid[static_cast<std::size_t>(best_index)];
  return result;
}

}  // namespace shimcp
