#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "shimcp/pattern.hpp"

namespace shimcp {

struct FitConfig {
  double lambda = 1.0;      // l1 weight; the objective carries no 1/n factor
  double l2_weight = 0.0;   // elastic-net l2 weight (0 = plain lasso)
  int max_order = 0;        // cap on interaction order; 0 = unbounded
  double kkt_tol = 1e-9;    // absolute tolerance on correlations
  int max_iterations = 100000;

  void validate() const;  // throws ConfigError
};

struct ActiveTerm {
  Pattern pattern;
  double beta = 0.0;
  int sign = 0;  // +1 / -1, matches sign(beta) for settled terms
};

struct ModelState {
  std::vector<ActiveTerm> active;
  Eigen::VectorXd residual;  // w = y - X_A beta_A, cached
  double tau = 0.0;          // candidate response used to build y, when applicable
  // objective components at the returned state
  double rss = 0.0;
  double l1 = 0.0;
  double l2_sq = 0.0;
  // objective value after each column-generation round (diagnostics)
  std::vector<double> round_objectives;

  double objective(const FitConfig& cfg) const {
    return 0.5 * rss + cfg.lambda * l1 + 0.5 * cfg.l2_weight * l2_sq;
  }
  bool is_active(const Pattern& p) const;
};

// y(tau) = [y_1, ..., y_n, tau]
Eigen::VectorXd augmented_response(const Eigen::VectorXd& y, double tau);

struct Violation {
  Pattern pattern;
  double correlation;  // |x_l^T w|
};

// Pattern maximizing |x_l^T w| over the full (order-capped) pattern space,
// excluding the current active set, found by a tree search pruned with the
// subtree bound b_{l,w}. Absent when the maximum is <= lambda + kkt_tol.
// Ties go to the lexicographically smallest pattern.
std::optional<Violation> find_max_violation(const ModelState& state,
                                            const CovariateMatrix& Z,
                                            const FitConfig& cfg,
                                            std::uint64_t* nodes_visited = nullptr);

// Unconstrained variant: max |x_l^T w| over every pattern, used for the
// lambda_max probe. Returns the maximizer and its correlation.
std::optional<Violation> max_absolute_correlation(const Eigen::VectorXd& w,
                                                  const CovariateMatrix& Z,
                                                  int max_order,
                                                  std::uint64_t* nodes_visited = nullptr);

// Fits min 0.5 ||y - X beta||^2 + 0.5 l2 ||beta||^2 + lambda ||beta||_1 over
// the implicit interaction feature space by column generation: solve the
// restricted problem by coordinate descent, add the worst violating pattern,
// repeat until the tree search certifies global KKT.
ModelState fit(const CovariateMatrix& Z, const Eigen::VectorXd& y_aug, const FitConfig& cfg);

class IterationLimitError : public Error {
public:
  IterationLimitError(const std::string& what, ModelState last)
      : Error(ErrorKind::Numeric, what), last_state(std::move(last)) {}
  ModelState last_state;
};

struct KktReport {
  double max_inactive_correlation = 0.0;
  std::optional<Pattern> worst_inactive;
  double max_active_deviation = 0.0;  // max_k | x_k^T w - l2 beta_k - lambda s_k |
  bool pass = false;
  std::uint64_t nodes_visited = 0;
};

KktReport certify_kkt(const ModelState& state, const CovariateMatrix& Z, const FitConfig& cfg);

// Solves (X_A^T X_A + l2 I) beta = X_A^T y - lambda s for the given signs and
// refreshes the residual; the equicorrelation system at a fixed active set.
// Throws SingularityError (naming identical-column pairs when found) if the
// system is rank deficient.
void polish_active(const std::vector<PatternColumn>& columns,
                   const Eigen::VectorXd& y,
                   const FitConfig& cfg,
                   std::vector<ActiveTerm>& active,
                   Eigen::VectorXd& residual);

}  // namespace shimcp
