#include "shimcp/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace shimcp::oracle {

namespace {

constexpr double kOracleKktTol = 1e-11;
constexpr double kOracleCdTol = 1e-13;
constexpr int kOracleMaxSweeps = 2000000;

double soft(double rho, double lambda) {
  if (rho > lambda) return rho - lambda;
  if (rho < -lambda) return rho + lambda;
  return 0.0;
}

}  // namespace

std::uint64_t expansion_size(int m, int d) { return pattern_space_size(m, d); }

DenseExpansion expand(const CovariateMatrix& Z, int d, std::uint64_t cap) {
  const int m = Z.m();
  if (d <= 0 || d > m) d = m;
  std::uint64_t p = expansion_size(m, d);
  if (p > cap) {
    throw SizeError("expansion of " + std::to_string(p) + " columns exceeds cap " +
                    std::to_string(cap));
  }
  DenseExpansion out;
  out.d = d;
  out.patterns.reserve(static_cast<std::size_t>(p));
  // All index combinations of each order, lexicographic, independent of the
  // tree search machinery.
  for (int order = 1; order <= d; ++order) {
    std::vector<int> idx(static_cast<std::size_t>(order));
    for (int k = 0; k < order; ++k) idx[static_cast<std::size_t>(k)] = k + 1;
    for (;;) {
      Pattern pat;
      pat.items = idx;
      out.patterns.push_back(std::move(pat));
      int pos = order - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == m - (order - 1 - pos)) --pos;
      if (pos < 0) break;
      ++idx[static_cast<std::size_t>(pos)];
      for (int k = pos + 1; k < order; ++k) {
        idx[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(k - 1)] + 1;
      }
    }
  }
  out.columns.resize(Z.rows(), static_cast<Eigen::Index>(out.patterns.size()));
  for (std::size_t j = 0; j < out.patterns.size(); ++j) {
    Eigen::VectorXd col = Eigen::VectorXd::Ones(Z.rows());
    for (int item : out.patterns[j].items) {
      col = col.cwiseProduct(Z.values().col(item - 1));
    }
    out.columns.col(static_cast<Eigen::Index>(j)) = col;
  }
  return out;
}

Eigen::VectorXd dense_lasso(const DenseExpansion& expansion, const Eigen::VectorXd& y_aug,
                            const FitConfig& cfg, const Eigen::VectorXd* warm_start) {
  const Eigen::MatrixXd& X = expansion.columns;
  if (y_aug.size() != X.rows()) throw DimensionError("dense_lasso: response length mismatch");
  const Eigen::Index p = X.cols();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (warm_start && warm_start->size() == p) beta = *warm_start;
  Eigen::VectorXd residual = y_aug - X * beta;
  Eigen::VectorXd norms(p);
  for (Eigen::Index j = 0; j < p; ++j) norms[j] = X.col(j).squaredNorm();

  for (int sweep = 0; sweep < kOracleMaxSweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (norms[j] == 0.0) continue;
      double old = beta[j];
      double rho = X.col(j).dot(residual) + old * norms[j];
      double updated = soft(rho, cfg.lambda) / (norms[j] + cfg.l2_weight);
      double change = updated - old;
      if (change != 0.0) {
        residual -= change * X.col(j);
        beta[j] = updated;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    if (max_change > kOracleCdTol) continue;
    // KKT residual over all explicit columns
    double worst = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      double corr = X.col(j).dot(residual) - cfg.l2_weight * beta[j];
      if (beta[j] != 0.0) {
        worst = std::max(worst, std::abs(corr - cfg.lambda * (beta[j] > 0.0 ? 1.0 : -1.0)));
      } else {
        worst = std::max(worst, std::max(0.0, std::abs(corr) - cfg.lambda));
      }
    }
    if (worst <= kOracleKktTol) return beta;
  }
  throw Error(ErrorKind::Numeric, "dense_lasso did not reach the oracle KKT tolerance");
}

GridConformal grid_conformal(const DenseExpansion& expansion, const Eigen::VectorXd& y,
                             const FitConfig& cfg, double alpha, int grid_size,
                             double lo, double hi) {
  if (grid_size < 100) throw ConfigError("grid_conformal needs grid_size >= 100");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(lo < hi)) throw ConfigError("grid range requires lo < hi");
  if (y.size() + 1 != expansion.columns.rows()) {
    throw DimensionError("grid_conformal: expansion must include the test row");
  }

  GridConformal out;
  out.lo = lo;
  out.hi = hi;
  out.step = (hi - lo) / static_cast<double>(grid_size - 1);
  out.accepted.assign(static_cast<std::size_t>(grid_size), 0);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(expansion.columns.cols());
  Eigen::VectorXd y_aug = augmented_response(y, lo);
  for (int g = 0; g < grid_size; ++g) {
    double tau = lo + out.step * g;
    y_aug[y_aug.size() - 1] = tau;
    beta = dense_lasso(expansion, y_aug, cfg, &beta);
    Eigen::VectorXd scores = (y_aug - expansion.columns * beta).cwiseAbs();
    out.accepted[static_cast<std::size_t>(g)] = p_value(scores) >= alpha ? 1 : 0;
  }

  out.set.alpha = alpha;
  int run_start = -1;
  for (int g = 0; g <= grid_size; ++g) {
    bool on = g < grid_size && out.accepted[static_cast<std::size_t>(g)] != 0;
    if (on && run_start < 0) run_start = g;
    if (!on && run_start >= 0) {
      double a = lo + out.step * run_start;
      double b = lo + out.step * g;  // one cell past the last accepted point
      out.set.intervals.push_back({a, std::min(b, hi)});
      run_start = -1;
    }
  }
  return out;
}

}  // namespace shimcp::oracle
