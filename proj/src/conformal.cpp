#include "shimcp/conformal.hpp"

#include <algorithm>
#include <cmath>

namespace shimcp {

namespace {

constexpr double kCrossingDedup = 1e-12;

// Scores |w_i| on the segment leaving `kink`, evaluated at offset s = tau - kink.tau.
Eigen::VectorXd segment_scores(const Kink& kink, double s) {
  const Eigen::VectorXd& w = kink.residual;
  const Eigen::VectorXd& v = kink.residual_direction;
  const Eigen::Index last = w.size() - 1;
  Eigen::VectorXd scores(w.size());
  for (Eigen::Index i = 0; i < last; ++i) {
    scores[i] = std::abs(w[i] - s * v[i]);
  }
  scores[last] = std::abs(w[last] + s * (1.0 - v[last]));
  return scores;
}

}  // namespace

double ConformalSet::total_length() const {
  double acc = 0.0;
  for (const auto& iv : intervals) acc += iv.width();
  return acc;
}

double ConformalSet::hull_length() const {
  if (intervals.empty()) return 0.0;
  return intervals.back().hi - intervals.front().lo;
}

bool ConformalSet::contains(double tau) const {
  for (const auto& iv : intervals) {
    if (tau >= iv.lo && tau < iv.hi) return true;
  }
  return false;
}

double p_value(const Eigen::VectorXd& scores) {
  if (scores.size() < 2) throw DimensionError("p_value needs at least two scores");
  const Eigen::Index count = scores.size();
  const double test = scores[count - 1];
  Eigen::Index below = 0;
  for (Eigen::Index i = 0; i < count; ++i) {
    if (scores[i] <= test) ++below;
  }
  return 1.0 - static_cast<double>(below) / static_cast<double>(count);
}

std::vector<double> segment_crossings(const Kink& kink, double next_tau) {
  const Eigen::VectorXd& w = kink.residual;
  const Eigen::VectorXd& v = kink.residual_direction;
  const Eigen::Index last = w.size() - 1;
  const double span = next_tau - kink.tau;
  const double a_t = w[last];
  const double b_t = 1.0 - v[last];

  std::vector<double> out;
  for (Eigen::Index i = 0; i < last; ++i) {
    // w_i(s) = a_i - s v_i against +-(a_t + s b_t)
    double a_i = w[i];
    double denom_plus = b_t + v[i];
    if (denom_plus != 0.0) {
      double s = (a_i - a_t) / denom_plus;
      if (s > 0.0 && s < span) out.push_back(kink.tau + s);
    }
    double denom_minus = v[i] - b_t;
    if (denom_minus != 0.0) {
      double s = (a_i + a_t) / denom_minus;
      if (s > 0.0 && s < span) out.push_back(kink.tau + s);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(),
                        [](double a, double b) { return b - a <= kCrossingDedup; }),
            out.end());
  return out;
}

ConformalSet full_cp(const TauPath& path, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (path.kinks.size() < 2) throw ConfigError("full_cp needs a path with at least two kinks");

  ConformalSet set;
  set.alpha = alpha;

  auto append = [&set](double lo, double hi) {
    if (!(hi > lo)) return;
    if (!set.intervals.empty() &&
        lo <= set.intervals.back().hi + kCrossingDedup * std::max(1.0, std::abs(lo))) {
      set.intervals.back().hi = std::max(set.intervals.back().hi, hi);
    } else {
      set.intervals.push_back({lo, hi});
    }
  };

  std::vector<double> points;
  for (std::size_t t = 0; t + 1 < path.kinks.size(); ++t) {
    const Kink& kink = path.kinks[t];
    double hi = path.kinks[t + 1].tau;
    if (!(hi > kink.tau)) continue;  // coalesced degenerate kink

    points.clear();
    points.push_back(kink.tau);
    for (double u : segment_crossings(kink, hi)) points.push_back(u);
    points.push_back(hi);

    for (std::size_t k = 0; k + 1 < points.size(); ++k) {
      double mid = 0.5 * (points[k] + points[k + 1]);
      double pi = p_value(segment_scores(kink, mid - kink.tau));
      if (pi >= alpha) append(points[k], points[k + 1]);
    }
  }

  double eps = 1e-9 * std::max(1.0, path.y_max - path.y_min);
  set.clipped = !set.intervals.empty() &&
                (set.intervals.front().lo <= path.y_min + eps ||
                 set.intervals.back().hi >= path.y_max - eps);
  return set;
}

double predict_row(const std::vector<ActiveTerm>& terms, const Eigen::VectorXd& z) {
  double acc = 0.0;
  for (const auto& term : terms) {
    double prod = term.beta;
    for (int item : term.pattern.items) {
      prod *= z[item - 1];
      if (prod == 0.0) break;
    }
    acc += prod;
  }
  return acc;
}

Eigen::VectorXd predict(const std::vector<ActiveTerm>& terms, const Eigen::MatrixXd& Z) {
  Eigen::VectorXd out(Z.rows());
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    out[i] = predict_row(terms, Z.row(i).transpose());
  }
  return out;
}

SplitResult split_cp(const Eigen::MatrixXd& Z_train, const Eigen::VectorXd& y_train,
                     const Eigen::MatrixXd& Z_cal, const Eigen::VectorXd& y_cal,
                     const Eigen::VectorXd& x_test, const FitConfig& cfg, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (Z_cal.rows() < 1) throw ConfigError("calibration set must be nonempty");
  if (Z_train.cols() != Z_cal.cols() || x_test.size() != Z_train.cols()) {
    throw DimensionError("train/calibration/test covariate counts disagree");
  }
  if (y_train.size() != Z_train.rows() || y_cal.size() != Z_cal.rows()) {
    throw DimensionError("response lengths do not match row counts");
  }

  CovariateMatrix train(Z_train);
  ModelState model = fit(train, y_train, cfg);

  SplitResult result;
  result.center = predict_row(model.active, x_test);
  result.calibration_scores = (y_cal - predict(model.active, Z_cal)).cwiseAbs();

  const auto n_cal = static_cast<std::size_t>(result.calibration_scores.size());
  auto rank = static_cast<std::size_t>(
      std::ceil((1.0 - alpha) * static_cast<double>(n_cal + 1)));
  if (rank > n_cal) {
    result.infinite = true;
    result.q = std::numeric_limits<double>::infinity();
  } else {
    std::vector<double> sorted(result.calibration_scores.data(),
                               result.calibration_scores.data() + n_cal);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                     sorted.end());
    result.q = sorted[rank - 1];
  }
  result.interval = {result.center - result.q, result.center + result.q};
  return result;
}

ExperimentReport evaluate(const std::vector<PointRecord>& records,
                          const Eigen::VectorXd& y_true,
                          const Eigen::VectorXd& y_pred) {
  if (records.empty()) throw ConfigError("evaluate needs at least one test point");
  if (y_true.size() != static_cast<Eigen::Index>(records.size()) ||
      y_pred.size() != y_true.size()) {
    throw DimensionError("record/truth/prediction counts disagree");
  }
  ExperimentReport report;
  report.points = static_cast<int>(records.size());
  double covered = 0.0;
  for (const auto& rec : records) {
    covered += rec.covered ? 1.0 : 0.0;
    report.mean_length += rec.length;
    report.mean_hull += rec.hull;
    report.mean_kinks += static_cast<double>(rec.kinks);
    report.mean_nodes += static_cast<double>(rec.nodes_visited);
  }
  double count = static_cast<double>(records.size());
  report.coverage = covered / count;
  report.mean_length /= count;
  report.mean_hull /= count;
  report.mean_kinks /= count;
  report.mean_nodes /= count;

  double mean = y_true.mean();
  double ss_tot = (y_true.array() - mean).square().sum();
  double ss_res = (y_true - y_pred).squaredNorm();
  report.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  return report;
}

}  // namespace shimcp
