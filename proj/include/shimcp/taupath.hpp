#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

#include "shimcp/solver.hpp"

namespace shimcp {

enum class KinkEvent { Start, Join, Leave, End };

const char* to_string(KinkEvent e);

// One breakpoint of the piecewise-linear map tau -> beta(tau). The stored
// active set, directions and residual describe the segment leaving this kink:
// on [tau_t, tau_{t+1}),
//   beta(tau) = beta(tau_t) + (tau - tau_t) nu,
//   w_i(tau)  = w_i(tau_t) - (tau - tau_t) v_i          for labeled rows,
//   w_test(tau) = w_test(tau_t) + (tau - tau_t) (1 - v_test).
struct Kink {
  double tau = 0.0;
  KinkEvent event = KinkEvent::Start;
  std::optional<Pattern> event_pattern;
  std::vector<ActiveTerm> active;      // state at this kink, event applied
  Eigen::VectorXd nu;                  // per active term
  Eigen::VectorXd residual_direction;  // v = X_A nu, length n+1
  Eigen::VectorXd residual;            // w(tau), length n+1
  double joiner_gamma = 0.0;           // gamma of the joining pattern (join kinks)
  std::uint64_t join_nodes_visited = 0;
  bool degenerate_tie = false;
};

struct PathStats {
  std::uint64_t join_steps = 0;
  std::uint64_t total_join_nodes = 0;
  std::uint64_t search_space = 0;  // pattern count at the configured order cap
  int degenerate_ties = 0;
  double seconds = 0.0;
};

struct TauPath {
  std::vector<Kink> kinks;
  double lambda = 0.0;
  double l2_weight = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
  PathStats stats;

  std::size_t kink_count() const { return kinks.size(); }
};

struct PathOptions {
  bool prune = true;
  std::uint64_t max_kinks = 200000;
  double time_budget_seconds = std::numeric_limits<double>::infinity();
  int stutter_limit = 64;  // consecutive sub-1e-12 steps tolerated
};

class BudgetError : public Error {
public:
  BudgetError(const std::string& what, TauPath partial)
      : Error(ErrorKind::Numeric, what), partial_path(std::move(partial)) {}
  TauPath partial_path;
};

struct Directions {
  Eigen::VectorXd nu;  // (X_A^T X_A + l2 I)^{-1} x_{test,A}
  Eigen::VectorXd v;   // X_A nu
};

// Throws SingularityError when the active Gram (plus l2 ridge) is rank
// deficient. An empty active set yields empty nu and zero v.
Directions directions(const std::vector<ActiveTerm>& active,
                      const CovariateMatrix& Z,
                      double l2_weight);

constexpr double kInfiniteStep = std::numeric_limits<double>::infinity();

// Step to the next coefficient zero crossing: min over active terms of
// (-beta / nu)_{++}, where (a)_{++} = a if a > 0 else infinity.
struct LeaveStep {
  double delta = kInfiniteStep;
  std::optional<Pattern> pattern;
  std::optional<std::size_t> index;  // position in the active vector
};
LeaveStep step_leave(const Kink& kink);

// Step to the next inclusion: exact minimum over all inactive patterns of the
// positive root of |x_l^T w(tau + d)| = lambda, found by a depth-first tree
// search. With prune on, a subtree is skipped only when the anti-monotone
// bound certificate puts every descendant's step beyond the current minimum.
// Candidates at or beyond `cap` are ignored in both modes.
struct JoinStep {
  double delta = kInfiniteStep;
  std::optional<Pattern> pattern;
  int sign = 0;          // sign of the correlation at the crossing
  double gamma = 0.0;    // slope x_{test,l} - x_l^T v of the joining pattern
  std::uint64_t nodes_visited = 0;
};
JoinStep step_join(const Kink& kink, const CovariateMatrix& Z, const FitConfig& cfg,
                   double cap = kInfiniteStep, bool prune = true,
                   double deadline_seconds = std::numeric_limits<double>::infinity());

// Algorithm: fit at tau = y_min by column generation, then alternate leave /
// join steps until the first kink at or beyond y_max.
TauPath compute_tau_path(const CovariateMatrix& Z, const Eigen::VectorXd& y,
                         double y_min, double y_max, const FitConfig& cfg,
                         const PathOptions& options = {});

// [min(y) - span, max(y) + span] with span = max(y) - min(y).
std::pair<double, double> default_tau_range(const Eigen::VectorXd& y);

// One JSONL record per kink: tau, event, active patterns as item lists and
// coefficients, 17 significant digits.
void dump_path_jsonl(const TauPath& path, std::ostream& out);

}  // namespace shimcp
