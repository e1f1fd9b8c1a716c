#include "shimcp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace shimcp {

namespace {

constexpr double kCdTol = 1e-10;        // coordinate-change stopping rule
constexpr double kPolishResidTol = 1e-7;  // relative residual for the Gram solve

double soft_threshold(double rho, double lambda) {
  if (rho > lambda) return rho - lambda;
  if (rho < -lambda) return rho + lambda;
  return 0.0;
}

// b_w only; the join step uses the full bound_pair.
double bound_w(const PatternColumn& column, const Eigen::VectorXd& w) {
  double pos = 0.0, neg = 0.0;
  for (std::size_t k = 0; k < column.support.size(); ++k) {
    double x = column.value_at_rank(k);
    double wi = w[column.support[k]];
    if (wi > 0.0) pos += wi * x;
    else neg -= wi * x;
  }
  return std::max(pos, neg);
}

std::optional<Violation> tree_max_correlation(const Eigen::VectorXd& w,
                                              const CovariateMatrix& Z,
                                              int max_order,
                                              double floor_value,
                                              const std::vector<Pattern>* exclude,
                                              std::uint64_t* nodes_visited) {
  double best = floor_value;
  std::optional<Violation> out;
  auto excluded = [&](const Pattern& p) {
    return exclude && std::binary_search(exclude->begin(), exclude->end(), p);
  };
  std::uint64_t visited = walk_pattern_tree(Z, max_order, [&](const PatternColumn& node) {
    if (node.support_empty()) return false;
    double b = bound_w(node, w);
    if (b < best) return false;  // nothing in this subtree can beat the running best
    if (!excluded(node.pattern)) {
      double corr = std::abs(node.dot(w));
      if (corr > best) {
        best = corr;
        out = Violation{node.pattern, corr};
      }
    }
    return true;
  });
  if (nodes_visited) *nodes_visited = visited;
  return out;
}

std::vector<Pattern> sorted_active_patterns(const std::vector<ActiveTerm>& active) {
  std::vector<Pattern> out;
  out.reserve(active.size());
  for (const auto& term : active) out.push_back(term.pattern);
  std::sort(out.begin(), out.end());
  return out;
}

// One full cyclic pass; returns the largest coefficient change.
double cd_sweep(const std::vector<PatternColumn>& columns,
                const std::vector<double>& norms_sq,
                const FitConfig& cfg,
                std::vector<ActiveTerm>& active,
                Eigen::VectorXd& residual) {
  double max_change = 0.0;
  for (std::size_t j = 0; j < active.size(); ++j) {
    if (norms_sq[j] == 0.0) continue;
    double old = active[j].beta;
    double rho = columns[j].dot(residual) + old * norms_sq[j];
    double updated = soft_threshold(rho, cfg.lambda) / (norms_sq[j] + cfg.l2_weight);
    double change = updated - old;
    if (change != 0.0) {
      const auto& col = columns[j];
      for (std::size_t k = 0; k < col.support.size(); ++k) {
        residual[col.support[k]] -= change * col.value_at_rank(k);
      }
      active[j].beta = updated;
      max_change = std::max(max_change, std::abs(change));
    }
  }
  return max_change;
}

void coordinate_descent(const std::vector<PatternColumn>& columns,
                        const FitConfig& cfg,
                        std::vector<ActiveTerm>& active,
                        Eigen::VectorXd& residual,
                        ModelState* state_for_error) {
  std::vector<double> norms_sq(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) norms_sq[j] = columns[j].norm_sq();
  for (int sweep = 0; sweep < cfg.max_iterations; ++sweep) {
    if (cd_sweep(columns, norms_sq, cfg, active, residual) <= kCdTol) return;
  }
  ModelState last;
  if (state_for_error) last = *state_for_error;
  last.active = active;
  last.residual = residual;
  throw IterationLimitError("coordinate descent did not converge within " +
                                std::to_string(cfg.max_iterations) + " sweeps",
                            std::move(last));
}

void refresh_objective(ModelState& state) {
  state.rss = state.residual.squaredNorm();
  state.l1 = 0.0;
  state.l2_sq = 0.0;
  for (const auto& term : state.active) {
    state.l1 += std::abs(term.beta);
    state.l2_sq += term.beta * term.beta;
  }
}

}  // namespace

void FitConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (l2_weight < 0.0) throw ConfigError("l2_weight must be nonnegative");
  if (kkt_tol < 0.0) throw ConfigError("kkt_tol must be nonnegative");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (max_order < 0) throw ConfigError("max_order must be nonnegative");
}

bool ModelState::is_active(const Pattern& p) const {
  for (const auto& term : active) {
    if (term.pattern == p) return true;
  }
  return false;
}

Eigen::VectorXd augmented_response(const Eigen::VectorXd& y, double tau) {
  Eigen::VectorXd out(y.size() + 1);
  out.head(y.size()) = y;
  out[y.size()] = tau;
  return out;
}

std::optional<Violation> find_max_violation(const ModelState& state,
                                            const CovariateMatrix& Z,
                                            const FitConfig& cfg,
                                            std::uint64_t* nodes_visited) {
  auto exclude = sorted_active_patterns(state.active);
  return tree_max_correlation(state.residual, Z, cfg.max_order,
                              cfg.lambda + cfg.kkt_tol, &exclude, nodes_visited);
}

std::optional<Violation> max_absolute_correlation(const Eigen::VectorXd& w,
                                                  const CovariateMatrix& Z,
                                                  int max_order,
                                                  std::uint64_t* nodes_visited) {
  if (w.size() != Z.rows()) throw DimensionError("residual length does not match matrix rows");
  return tree_max_correlation(w, Z, max_order, 0.0, nullptr, nodes_visited);
}

void polish_active(const std::vector<PatternColumn>& columns,
                   const Eigen::VectorXd& y,
                   const FitConfig& cfg,
                   std::vector<ActiveTerm>& active,
                   Eigen::VectorXd& residual) {
  const auto a = static_cast<Eigen::Index>(active.size());
  if (a == 0) {
    residual = y;
    return;
  }
  Eigen::MatrixXd gram(a, a);
  Eigen::VectorXd rhs(a);
  for (Eigen::Index i = 0; i < a; ++i) {
    const auto& ci = columns[static_cast<std::size_t>(i)];
    rhs[i] = ci.dot(y) - cfg.lambda * active[static_cast<std::size_t>(i)].sign;
    for (Eigen::Index j = i; j < a; ++j) {
      double g = sparse_dot(ci, columns[static_cast<std::size_t>(j)]);
      gram(i, j) = g;
      gram(j, i) = g;
    }
    gram(i, i) += cfg.l2_weight;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::VectorXd beta = ldlt.solve(rhs);
  double resid = (gram * beta - rhs).cwiseAbs().maxCoeff();
  double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  if (!beta.allFinite() || resid > kPolishResidTol * scale) {
    std::ostringstream msg;
    msg << "active Gram matrix is rank deficient";
    bool found = false;
    for (std::size_t i = 0; i < columns.size() && !found; ++i) {
      for (std::size_t j = i + 1; j < columns.size(); ++j) {
        if (columns[i].support == columns[j].support && columns[i].values == columns[j].values) {
          msg << "; identical columns " << active[i].pattern.to_string() << " and "
              << active[j].pattern.to_string();
          found = true;
          break;
        }
      }
    }
    if (!found) {
      msg << "; active patterns:";
      for (const auto& term : active) msg << ' ' << term.pattern.to_string();
      msg << " (use l2_weight > 0 for correlated features)";
    }
    throw SingularityError(msg.str());
  }
  residual = y;
  for (Eigen::Index j = 0; j < a; ++j) {
    active[static_cast<std::size_t>(j)].beta = beta[j];
    const auto& col = columns[static_cast<std::size_t>(j)];
    for (std::size_t k = 0; k < col.support.size(); ++k) {
      residual[col.support[k]] -= beta[j] * col.value_at_rank(k);
    }
  }
}

ModelState fit(const CovariateMatrix& Z, const Eigen::VectorXd& y_aug, const FitConfig& cfg) {
  cfg.validate();
  if (y_aug.size() != Z.rows()) {
    throw DimensionError("response length " + std::to_string(y_aug.size()) +
                         " does not match matrix rows " + std::to_string(Z.rows()));
  }
  ModelState state;
  state.residual = y_aug;
  state.tau = y_aug[y_aug.size() - 1];
  refresh_objective(state);
  state.round_objectives.push_back(state.objective(cfg));

  std::vector<PatternColumn> columns;
  for (int round = 0;; ++round) {
    auto violation = find_max_violation(state, Z, cfg);
    if (!violation) break;
    if (round >= cfg.max_iterations) {
      throw IterationLimitError("column generation did not converge within " +
                                    std::to_string(cfg.max_iterations) + " rounds",
                                state);
    }
    state.active.push_back({violation->pattern, 0.0, 0});
    columns.push_back(materialize(violation->pattern, Z));

    coordinate_descent(columns, cfg, state.active, state.residual, &state);

    // Drop exact zeros, then certify the restricted solution by solving the
    // equicorrelation system with the settled signs. A sign flip means the
    // support was still off; zero the flipped terms and descend again.
    for (int attempt = 0; attempt < 8; ++attempt) {
      for (std::size_t j = state.active.size(); j-- > 0;) {
        if (state.active[j].beta == 0.0) {
          state.active.erase(state.active.begin() + static_cast<std::ptrdiff_t>(j));
          columns.erase(columns.begin() + static_cast<std::ptrdiff_t>(j));
        }
      }
      for (auto& term : state.active) term.sign = term.beta > 0.0 ? 1 : -1;
      std::vector<ActiveTerm> trial = state.active;
      Eigen::VectorXd trial_residual;
      polish_active(columns, y_aug, cfg, trial, trial_residual);
      bool consistent = true;
      for (std::size_t j = 0; j < trial.size(); ++j) {
        if (trial[j].beta * trial[j].sign < 0.0 && std::abs(trial[j].beta) > 1e-12) {
          trial[j].beta = 0.0;
          consistent = false;
        }
      }
      if (consistent) {
        state.active = std::move(trial);
        state.residual = std::move(trial_residual);
        break;
      }
      for (std::size_t j = 0; j < trial.size(); ++j) state.active[j].beta = trial[j].beta;
      state.residual = y_aug;
      for (std::size_t j = 0; j < columns.size(); ++j) {
        const auto& col = columns[j];
        for (std::size_t k = 0; k < col.support.size(); ++k) {
          state.residual[col.support[k]] -= state.active[j].beta * col.value_at_rank(k);
        }
      }
      coordinate_descent(columns, cfg, state.active, state.residual, &state);
    }

    refresh_objective(state);
    state.round_objectives.push_back(state.objective(cfg));
  }
  refresh_objective(state);
  return state;
}

KktReport certify_kkt(const ModelState& state, const CovariateMatrix& Z, const FitConfig& cfg) {
  KktReport report;
  auto exclude = sorted_active_patterns(state.active);
  auto worst = tree_max_correlation(state.residual, Z, cfg.max_order, 0.0, &exclude,
                                    &report.nodes_visited);
  if (worst) {
    report.max_inactive_correlation = worst->correlation;
    report.worst_inactive = worst->pattern;
  }
  for (const auto& term : state.active) {
    PatternColumn col = materialize(term.pattern, Z);
    double corr = col.dot(state.residual) - cfg.l2_weight * term.beta;
    int sign = term.sign != 0 ? term.sign : (term.beta >= 0.0 ? 1 : -1);
    report.max_active_deviation =
        std::max(report.max_active_deviation, std::abs(corr - cfg.lambda * sign));
  }
  report.pass = report.max_inactive_correlation <= cfg.lambda + cfg.kkt_tol &&
                report.max_active_deviation <= cfg.kkt_tol;
  return report;
}

}  // namespace shimcp
