#include "shimcp/pattern.hpp"

#include <algorithm>
#include <iterator>
#include <sstream>

namespace shimcp {

Pattern::Pattern(std::vector<int> raw) : items(std::move(raw)) {
  std::sort(items.begin(), items.end());
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k] < 1) {
      throw InvalidPatternError("pattern item " + std::to_string(items[k]) +
                                " is below 1");
    }
    if (k > 0 && items[k] == items[k - 1]) {
      throw InvalidPatternError("pattern contains duplicate item " +
                                std::to_string(items[k]));
    }
  }
}

void Pattern::validate(int m) const {
  if (items.empty()) throw InvalidPatternError("pattern must be non-empty");
  if (items.back() > m) {
    throw InvalidPatternError("pattern item " + std::to_string(items.back()) +
                              " exceeds covariate count " + std::to_string(m));
  }
}

std::string Pattern::to_string() const {
  std::ostringstream out;
  out << '{';
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) out << ',';
    out << items[k];
  }
  out << '}';
  return out.str();
}

CovariateMatrix::CovariateMatrix(Eigen::MatrixXd values, bool allow_unit_interval)
    : values_(std::move(values)) {
  if (values_.rows() < 2 || values_.cols() < 1) {
    throw DimensionError("covariate matrix needs at least one labeled row, one test row and one covariate");
  }
  binary_ = true;
  for (int j = 0; j < values_.cols(); ++j) {
    for (int i = 0; i < values_.rows(); ++i) {
      double v = values_(i, j);
      if (v == 0.0 || v == 1.0) continue;
      if (allow_unit_interval && v > 0.0 && v < 1.0) {
        binary_ = false;
        continue;
      }
      throw DimensionError("covariate entry (" + std::to_string(i) + "," +
                           std::to_string(j + 1) + ") = " + std::to_string(v) +
                           " is not a valid covariate value");
    }
  }
  supports_.resize(static_cast<std::size_t>(values_.cols()));
  for (int j = 0; j < values_.cols(); ++j) {
    for (int i = 0; i < values_.rows(); ++i) {
      if (values_(i, j) != 0.0) supports_[static_cast<std::size_t>(j)].push_back(i);
    }
  }
}

double PatternColumn::test_value() const {
  if (support.empty() || support.back() != length - 1) return 0.0;
  return value_at_rank(support.size() - 1);
}

double PatternColumn::dot(const Eigen::VectorXd& w) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < support.size(); ++k) {
    acc += value_at_rank(k) * w[support[k]];
  }
  return acc;
}

double PatternColumn::norm_sq() const {
  if (values.empty()) return static_cast<double>(support.size());
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return acc;
}

Eigen::VectorXd PatternColumn::dense() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(length);
  for (std::size_t k = 0; k < support.size(); ++k) {
    out[support[k]] = value_at_rank(k);
  }
  return out;
}

double sparse_dot(const PatternColumn& a, const PatternColumn& b) {
  double acc = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.support.size() && j < b.support.size()) {
    if (a.support[i] < b.support[j]) ++i;
    else if (a.support[i] > b.support[j]) ++j;
    else {
      acc += a.value_at_rank(i) * b.value_at_rank(j);
      ++i;
      ++j;
    }
  }
  return acc;
}

PatternColumn extend_column(const PatternColumn& parent, int item, const CovariateMatrix& Z) {
  PatternColumn child;
  child.pattern.items = parent.pattern.items;
  child.pattern.items.push_back(item);
  child.length = parent.length;
  const auto& covariate_rows = Z.covariate_support(item);
  if (Z.binary() && parent.values.empty()) {
    std::set_intersection(parent.support.begin(), parent.support.end(),
                          covariate_rows.begin(), covariate_rows.end(),
                          std::back_inserter(child.support));
  } else {
    for (std::size_t k = 0; k < parent.support.size(); ++k) {
      int row = parent.support[k];
      double v = parent.value_at_rank(k) * Z.value(row, item);
      if (v != 0.0) {
        child.support.push_back(row);
        child.values.push_back(v);
      }
    }
  }
  return child;
}

PatternColumn materialize(const Pattern& pattern, const CovariateMatrix& Z) {
  pattern.validate(Z.m());
  PatternColumn col;
  col.pattern.items = {pattern.items.front()};
  col.length = Z.rows();
  col.support = Z.covariate_support(pattern.items.front());
  if (!Z.binary()) {
    col.values.reserve(col.support.size());
    for (int row : col.support) col.values.push_back(Z.value(row, pattern.items.front()));
  }
  for (std::size_t k = 1; k < pattern.items.size(); ++k) {
    col = extend_column(col, pattern.items[k], Z);
  }
  return col;
}

std::vector<Pattern> children(const Pattern& pattern, int m) {
  std::vector<Pattern> out;
  for (int item = pattern.max_item() + 1; item <= m; ++item) {
    Pattern child;
    child.items = pattern.items;
    child.items.push_back(item);
    out.push_back(std::move(child));
  }
  return out;
}

std::pair<double, double> bound_pair(const PatternColumn& column,
                                     const Eigen::VectorXd& w,
                                     const Eigen::VectorXd& v) {
  if (w.size() != column.length || v.size() != column.length) {
    throw DimensionError("bound_pair: vector length " + std::to_string(w.size()) +
                         "/" + std::to_string(v.size()) + " does not match column length " +
                         std::to_string(column.length));
  }
  double w_pos = 0.0, w_neg = 0.0, v_pos = 0.0, v_neg = 0.0;
  for (std::size_t k = 0; k < column.support.size(); ++k) {
    double x = column.value_at_rank(k);
    double wi = w[column.support[k]];
    double vi = v[column.support[k]];
    if (wi > 0.0) w_pos += wi * x;
    else w_neg -= wi * x;
    if (vi > 0.0) v_pos += vi * x;
    else v_neg -= vi * x;
  }
  return {std::max(w_pos, w_neg), std::max(v_pos, v_neg)};
}

std::uint64_t pattern_space_size(int m, int max_order) {
  int d = (max_order <= 0 || max_order > m) ? m : max_order;
  unsigned __int128 total = 0;
  unsigned __int128 c = 1;  // C(m, k), exact
  const unsigned __int128 cap = static_cast<unsigned __int128>(UINT64_MAX);
  for (int k = 1; k <= d; ++k) {
    c = c * static_cast<unsigned>(m - k + 1) / static_cast<unsigned>(k);
    total += c;
    if (total > cap || c > cap) return UINT64_MAX;
  }
  return static_cast<std::uint64_t>(total);
}

}  // namespace shimcp
