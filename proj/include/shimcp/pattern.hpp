#pragma once

#include <Eigen/Dense>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "shimcp/errors.hpp"

namespace shimcp {

// An interaction term: a set of original covariate indices (1-based, strictly
// increasing). The empty pattern is the tree root and is not a model term.
struct Pattern {
  std::vector<int> items;

  Pattern() = default;
  explicit Pattern(std::vector<int> raw);  // sorts; rejects duplicates and indices < 1
  Pattern(std::initializer_list<int> raw) : Pattern(std::vector<int>(raw)) {}

  static Pattern root() { return Pattern(); }

  int order() const { return static_cast<int>(items.size()); }
  bool empty() const { return items.empty(); }
  int max_item() const { return items.empty() ? 0 : items.back(); }

  // Throws InvalidPatternError unless non-empty with items in [1, m].
  void validate(int m) const;

  std::string to_string() const;  // "{1,3,5}"

  auto operator<=>(const Pattern&) const = default;
};

// Binary design data: n labeled rows followed by one test row. Entries must
// be exactly 0/1 unless unit-interval mode is requested, in which case any
// value in [0, 1] is accepted and support lists track nonzero rows.
class CovariateMatrix {
public:
  CovariateMatrix(Eigen::MatrixXd values, bool allow_unit_interval = false);

  int n() const { return static_cast<int>(values_.rows()) - 1; }
  int rows() const { return static_cast<int>(values_.rows()); }
  int m() const { return static_cast<int>(values_.cols()); }
  bool binary() const { return binary_; }

  // row is 0-based in [0, n]; covariate is 1-based in [1, m].
  double value(int row, int covariate) const { return values_(row, covariate - 1); }
  const Eigen::MatrixXd& values() const { return values_; }

  // Sorted nonzero rows of one original covariate.
  const std::vector<int>& covariate_support(int covariate) const {
    return supports_[static_cast<std::size_t>(covariate - 1)];
  }

private:
  Eigen::MatrixXd values_;
  std::vector<std::vector<int>> supports_;
  bool binary_;
};

// One materialized design column, stored as a sorted support list. `values`
// is empty for binary data (all supported entries are 1).
struct PatternColumn {
  Pattern pattern;
  std::vector<int> support;
  std::vector<double> values;
  int length = 0;

  bool support_empty() const { return support.empty(); }
  double value_at_rank(std::size_t k) const { return values.empty() ? 1.0 : values[k]; }
  // x_{n+1,l}: the column entry at the test row.
  double test_value() const;
  double dot(const Eigen::VectorXd& w) const;
  double norm_sq() const;
  Eigen::VectorXd dense() const;
};

// column i = prod_{l in pattern} Z[i, l]
PatternColumn materialize(const Pattern& pattern, const CovariateMatrix& Z);

// Canonical duplicate-free enumeration: extend by one index strictly greater
// than max(items). The root's children are the singletons.
std::vector<Pattern> children(const Pattern& pattern, int m);

// Support-merge dot product of two materialized columns.
double sparse_dot(const PatternColumn& a, const PatternColumn& b);

// Lemma-style bounds: b_w = max over sign classes of sum_{i in support} |w_i| x_il,
// likewise for v. Both bound |x_l^T w| (resp. v) for this pattern and every
// descendant.
std::pair<double, double> bound_pair(const PatternColumn& column,
                                     const Eigen::VectorXd& w,
                                     const Eigen::VectorXd& v);

// Number of patterns of order <= max_order (0 or >= m means unbounded),
// saturating at the full 2^m - 1 when it fits in 64 bits.
std::uint64_t pattern_space_size(int m, int max_order);

// Intersects a parent column with one more covariate; item must exceed
// the parent's max item.
PatternColumn extend_column(const PatternColumn& parent, int item, const CovariateMatrix& Z);

// Depth-first preorder walk over the pattern tree with support-intersection
// materialization. The visitor is called once per node and returns whether to
// descend into the node's children; nodes past max_order are never produced.
// Preorder on this tree is lexicographic order of the item lists. Returns the
// number of visited nodes.
template <typename Visitor>
std::uint64_t walk_pattern_tree(const CovariateMatrix& Z, int max_order, Visitor&& visit) {
  const int m = Z.m();
  const int depth_cap = (max_order <= 0 || max_order > m) ? m : max_order;
  std::uint64_t visited = 0;

  auto rec = [&](auto&& self, const PatternColumn& node) -> void {
    ++visited;
    bool descend = visit(node);
    if (!descend || node.pattern.order() >= depth_cap) return;
    for (int item = node.pattern.max_item() + 1; item <= m; ++item) {
      self(self, extend_column(node, item, Z));
    }
  };

  for (int first = 1; first <= m; ++first) {
    PatternColumn col;
    col.pattern.items = {first};
    col.length = Z.rows();
    col.support = Z.covariate_support(first);
    if (!Z.binary()) {
      col.values.reserve(col.support.size());
      for (int row : col.support) col.values.push_back(Z.value(row, first));
    }
    rec(rec, col);
  }
  return visited;
}

}  // namespace shimcp
