#include "shimcp/taupath.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "shimcp/csv.hpp"

namespace shimcp {

namespace {

constexpr double kStepEps = 1e-12;  // steps below this are degenerate stutter

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Raised out of the join search when the wall-clock budget runs out; turned
// into a BudgetError (with the partial path) by compute_tau_path.
struct JoinDeadlineExceeded {};

Eigen::MatrixXd active_gram(const std::vector<PatternColumn>& columns, double l2_weight) {
  const auto a = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd gram(a, a);
  for (Eigen::Index i = 0; i < a; ++i) {
    for (Eigen::Index j = i; j < a; ++j) {
      double g = sparse_dot(columns[static_cast<std::size_t>(i)],
                            columns[static_cast<std::size_t>(j)]);
      gram(i, j) = g;
      gram(j, i) = g;
    }
    gram(i, i) += l2_weight;
  }
  return gram;
}

Directions directions_from_columns(const std::vector<PatternColumn>& columns,
                                   const std::vector<ActiveTerm>& active,
                                   int rows, double l2_weight) {
  Directions dir;
  dir.v = Eigen::VectorXd::Zero(rows);
  const auto a = static_cast<Eigen::Index>(columns.size());
  dir.nu = Eigen::VectorXd::Zero(a);
  if (a == 0) return dir;

  Eigen::MatrixXd gram = active_gram(columns, l2_weight);
  Eigen::VectorXd rhs(a);
  for (Eigen::Index j = 0; j < a; ++j) {
    rhs[j] = columns[static_cast<std::size_t>(j)].test_value();
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  dir.nu = ldlt.solve(rhs);
  double resid = (gram * dir.nu - rhs).cwiseAbs().maxCoeff();
  double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  if (!dir.nu.allFinite() || resid > 1e-7 * scale) {
    std::string msg = "singular active Gram matrix in direction solve; active patterns:";
    for (const auto& term : active) msg += ' ' + term.pattern.to_string();
    if (l2_weight == 0.0) msg += " (use l2_weight > 0 for correlated features)";
    throw SingularityError(msg);
  }
  for (Eigen::Index j = 0; j < a; ++j) {
    const auto& col = columns[static_cast<std::size_t>(j)];
    for (std::size_t k = 0; k < col.support.size(); ++k) {
      dir.v[col.support[k]] += dir.nu[j] * col.value_at_rank(k);
    }
  }
  return dir;
}

struct JoinReference {
  double abs_rho;   // |x_k^T w - l2 beta_k|, lambda at a consistent kink
  double slope;     // |x_k^T v + l2 nu_k| + x_{test,k}
};

JoinStep join_search(const Kink& kink, const CovariateMatrix& Z, const FitConfig& cfg,
                     double cap, bool prune, double deadline_seconds,
                     const std::vector<PatternColumn>* active_columns) {
  const Eigen::VectorXd& w = kink.residual;
  const Eigen::VectorXd& v = kink.residual_direction;
  const double lambda = cfg.lambda;

  std::vector<Pattern> active_sorted;
  active_sorted.reserve(kink.active.size());
  for (const auto& term : kink.active) active_sorted.push_back(term.pattern);
  std::sort(active_sorted.begin(), active_sorted.end());

  // Reference terms for the pruning certificate. For the elastic net the
  // equicorrelation quantities carry the ridge corrections.
  std::vector<JoinReference> refs;
  refs.reserve(kink.active.size());
  for (std::size_t k = 0; k < kink.active.size(); ++k) {
    PatternColumn col = active_columns ? (*active_columns)[k]
                                       : materialize(kink.active[k].pattern, Z);
    double rho_bar = col.dot(w) - cfg.l2_weight * kink.active[k].beta;
    double eta_bar = col.dot(v) + cfg.l2_weight * (kink.nu.size() > static_cast<Eigen::Index>(k)
                                                       ? kink.nu[static_cast<Eigen::Index>(k)]
                                                       : 0.0);
    refs.push_back({std::abs(rho_bar), std::abs(eta_bar) + col.test_value()});
  }
  auto prune_rhs = [&](double dstar) {
    if (refs.empty()) return lambda;  // empty active set: level-crossing certificate
    double best = -kInfiniteStep;
    for (const auto& r : refs) best = std::max(best, r.abs_rho - dstar * r.slope);
    return best;
  };

  JoinStep best;
  best.delta = cap;
  bool has_deadline = std::isfinite(deadline_seconds);
  std::uint64_t since_check = 0;

  best.nodes_visited = walk_pattern_tree(Z, cfg.max_order, [&](const PatternColumn& node) {
    if (has_deadline && ++since_check >= 16384) {
      since_check = 0;
      if (now_seconds() > deadline_seconds) throw JoinDeadlineExceeded{};
    }
    if (prune && node.support_empty()) return false;  // zero column: no crossings below

    double rho = node.dot(w);
    double eta = node.dot(v);
    double xt = node.test_value();
    double gamma = xt - eta;
    bool is_active = std::binary_search(active_sorted.begin(), active_sorted.end(), node.pattern);
    if (!is_active && gamma != 0.0) {
      for (int branch : {+1, -1}) {
        double candidate = (branch * lambda - rho) / gamma;
        if (candidate > kStepEps && candidate < best.delta) {
          best.delta = candidate;
          best.pattern = node.pattern;
          best.sign = branch;
          best.gamma = gamma;
        }
      }
    }
    if (!prune) return true;
    double dstar = best.delta;
    if (!std::isfinite(dstar)) return true;
    auto [b_w, b_v] = bound_pair(node, w, v);
    return !(b_w + dstar * (b_v + xt) < prune_rhs(dstar));
  });
  if (!best.pattern) best.delta = kInfiniteStep;
  return best;
}

}  // namespace

const char* to_string(KinkEvent e) {
  switch (e) {
    case KinkEvent::Start: return "start";
    case KinkEvent::Join: return "join";
    case KinkEvent::Leave: return "leave";
    case KinkEvent::End: return "end";
  }
  return "?";
}

Directions directions(const std::vector<ActiveTerm>& active,
                      const CovariateMatrix& Z,
                      double l2_weight) {
  std::vector<PatternColumn> columns;
  columns.reserve(active.size());
  for (const auto& term : active) columns.push_back(materialize(term.pattern, Z));
  return directions_from_columns(columns, active, Z.rows(), l2_weight);
}

LeaveStep step_leave(const Kink& kink) {
  LeaveStep out;
  for (std::size_t j = 0; j < kink.active.size(); ++j) {
    double nu = kink.nu.size() > static_cast<Eigen::Index>(j)
                    ? kink.nu[static_cast<Eigen::Index>(j)]
                    : 0.0;
    if (nu == 0.0) continue;
    double ratio = -kink.active[j].beta / nu;
    if (ratio > 0.0 && ratio < out.delta) {
      out.delta = ratio;
      out.pattern = kink.active[j].pattern;
      out.index = j;
    }
  }
  return out;
}

JoinStep step_join(const Kink& kink, const CovariateMatrix& Z, const FitConfig& cfg,
                   double cap, bool prune, double deadline_seconds) {
  return join_search(kink, Z, cfg, cap, prune, deadline_seconds, nullptr);
}

std::pair<double, double> default_tau_range(const Eigen::VectorXd& y) {
  double lo = y.minCoeff();
  double hi = y.maxCoeff();
  double span = hi - lo;
  if (span <= 0.0) span = std::max(1.0, std::abs(hi));
  return {lo - span, hi + span};
}

TauPath compute_tau_path(const CovariateMatrix& Z, const Eigen::VectorXd& y,
                         double y_min, double y_max, const FitConfig& cfg,
                         const PathOptions& options) {
  cfg.validate();
  if (!(y_min < y_max)) throw ConfigError("tau range requires y_min < y_max");
  if (y.size() != Z.n()) {
    throw DimensionError("response length " + std::to_string(y.size()) +
                         " does not match labeled row count " + std::to_string(Z.n()));
  }

  const double started = now_seconds();
  const double deadline = std::isfinite(options.time_budget_seconds)
                              ? started + options.time_budget_seconds
                              : std::numeric_limits<double>::infinity();

  TauPath path;
  path.lambda = cfg.lambda;
  path.l2_weight = cfg.l2_weight;
  path.y_min = y_min;
  path.y_max = y_max;
  path.stats.search_space = pattern_space_size(Z.m(), cfg.max_order);

  // Initial solve at tau_1 = y_min.
  Eigen::VectorXd y_tau = augmented_response(y, y_min);
  ModelState init = fit(Z, y_tau, cfg);

  std::vector<ActiveTerm> active = init.active;
  std::vector<PatternColumn> columns;
  columns.reserve(active.size());
  for (const auto& term : active) columns.push_back(materialize(term.pattern, Z));

  double tau = y_min;
  Eigen::VectorXd w = init.residual;

  auto push_kink = [&](KinkEvent event, std::optional<Pattern> event_pattern,
                       double joiner_gamma, std::uint64_t join_nodes, bool tie) {
    Kink kink;
    kink.tau = tau;
    kink.event = event;
    kink.event_pattern = std::move(event_pattern);
    kink.active = active;
    Directions dir = directions_from_columns(columns, active, Z.rows(), cfg.l2_weight);
    // Re-anchor the coefficients on the equicorrelation system so drift never
    // accumulates across kinks.
    polish_active(columns, y_tau, cfg, kink.active, w);
    kink.nu = std::move(dir.nu);
    kink.residual_direction = std::move(dir.v);
    kink.residual = w;
    kink.joiner_gamma = joiner_gamma;
    kink.join_nodes_visited = join_nodes;
    kink.degenerate_tie = tie;
    active = kink.active;
    path.kinks.push_back(std::move(kink));
  };

  try {
    push_kink(KinkEvent::Start, std::nullopt, 0.0, 0, false);

    int stutter = 0;
    while (tau < y_max) {
      if (path.kinks.size() >= options.max_kinks) {
        path.stats.seconds = now_seconds() - started;
        throw BudgetError("kink budget " + std::to_string(options.max_kinks) +
                              " exceeded at tau = " + format_double(tau),
                          path);
      }
      if (now_seconds() > deadline) {
        path.stats.seconds = now_seconds() - started;
        throw BudgetError("time budget exceeded at tau = " + format_double(tau), path);
      }

      const Kink& kink = path.kinks.back();
      LeaveStep leave = step_leave(kink);
      double cap = y_max - tau;
      JoinStep join;
      try {
        join = join_search(kink, Z, cfg, cap, options.prune, deadline, &columns);
      } catch (const JoinDeadlineExceeded&) {
        path.stats.seconds = now_seconds() - started;
        throw BudgetError("time budget exceeded during join search at tau = " +
                              format_double(tau),
                          path);
      }
      path.stats.join_steps += 1;
      path.stats.total_join_nodes += join.nodes_visited;

      bool tie = std::isfinite(leave.delta) && std::isfinite(join.delta) &&
                 std::abs(leave.delta - join.delta) <= kStepEps;
      if (tie) path.stats.degenerate_ties += 1;

      // Leave first on ties; the paper's one-at-a-time assumption does not
      // cover this case.
      bool take_leave = leave.delta <= join.delta;
      double delta = take_leave ? leave.delta : join.delta;

      if (!std::isfinite(delta) || tau + delta >= y_max) {
        double step = y_max - tau;
        tau = y_max;
        y_tau[y_tau.size() - 1] = tau;
        for (std::size_t j = 0; j < active.size(); ++j) {
          active[j].beta += step * kink.nu[static_cast<Eigen::Index>(j)];
        }
        w[w.size() - 1] += step;
        w -= step * kink.residual_direction;
        push_kink(KinkEvent::End, std::nullopt, 0.0, join.nodes_visited, tie);
        break;
      }

      tau += delta;
      y_tau[y_tau.size() - 1] = tau;
      for (std::size_t j = 0; j < active.size(); ++j) {
        active[j].beta += delta * kink.nu[static_cast<Eigen::Index>(j)];
      }
      w[w.size() - 1] += delta;
      w -= delta * kink.residual_direction;

      if (delta <= kStepEps) {
        if (++stutter > options.stutter_limit) {
          path.stats.seconds = now_seconds() - started;
          throw BudgetError("stalled at tau = " + format_double(tau) + " (" +
                                std::to_string(stutter) + " consecutive degenerate steps)",
                            path);
        }
      } else {
        stutter = 0;
      }

      if (take_leave) {
        std::size_t j = *leave.index;
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
        columns.erase(columns.begin() + static_cast<std::ptrdiff_t>(j));
        push_kink(KinkEvent::Leave, leave.pattern, 0.0, join.nodes_visited, tie);
      } else {
        active.push_back({*join.pattern, 0.0, join.sign});
        columns.push_back(materialize(*join.pattern, Z));
        push_kink(KinkEvent::Join, join.pattern, join.gamma, join.nodes_visited, tie);
      }
    }
  } catch (BudgetError& err) {
    err.partial_path.stats = path.stats;
    throw;
  }

  path.stats.seconds = now_seconds() - started;
  return path;
}

void dump_path_jsonl(const TauPath& path, std::ostream& out) {
  for (const auto& kink : path.kinks) {
    out << "{\"tau\":" << format_double(kink.tau) << ",\"event\":\"" << to_string(kink.event)
        << '"';
    if (kink.event_pattern) {
      out << ",\"pattern\":[";
      const auto& items = kink.event_pattern->items;
      for (std::size_t k = 0; k < items.size(); ++k) {
        if (k) out << ',';
        out << items[k];
      }
      out << ']';
    }
    out << ",\"active\":[";
    for (std::size_t j = 0; j < kink.active.size(); ++j) {
      if (j) out << ',';
      out << "{\"items\":[";
      const auto& items = kink.active[j].pattern.items;
      for (std::size_t k = 0; k < items.size(); ++k) {
        if (k) out << ',';
        out << items[k];
      }
      out << "],\"beta\":" << format_double(kink.active[j].beta)
          << ",\"sign\":" << kink.active[j].sign << '}';
    }
    out << "],\"nodes\":" << kink.join_nodes_visited << "}\n";
  }
}

}  // namespace shimcp
