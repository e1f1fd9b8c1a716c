#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "shimcp/taupath.hpp"

namespace shimcp {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
};

// Sorted union of disjoint half-open intervals [lo, hi) of candidate
// responses. `clipped` is set when the set touches the search range boundary,
// i.e. the true set may extend past it.
struct ConformalSet {
  std::vector<Interval> intervals;
  double alpha = 0.0;
  bool clipped = false;

  bool empty() const { return intervals.empty(); }
  double total_length() const;
  double hull_length() const;  // single-interval width reported alongside
  bool contains(double tau) const;
};

// pi = 1 - #{i : S_i <= S_test} / (n+1); the test score is the last entry and
// always counts itself. Requires at least two scores.
double p_value(const Eigen::VectorXd& scores);

// All tau in the open segment (kink.tau, next_tau) where some labeled
// residual matches the test residual in absolute value; sorted, deduplicated
// at 1e-12.
std::vector<double> segment_crossings(const Kink& kink, double next_tau);

// Exact full conformal set from a path over [y_min, y_max]: within each
// inter-crossing subinterval the score ranking is constant, so pi is read off
// at the midpoint and accepted subintervals are unioned.
ConformalSet full_cp(const TauPath& path, double alpha);

struct SplitResult {
  Interval interval;
  double center = 0.0;  // fitted prediction at the test point
  double q = 0.0;       // calibration quantile
  Eigen::VectorXd calibration_scores;
  bool infinite = false;  // quantile index exceeded the calibration size
};

// Fit once on the training split; the interval is center +- the
// ceil((1-alpha)(n_cal+1))-th smallest absolute calibration residual.
SplitResult split_cp(const Eigen::MatrixXd& Z_train, const Eigen::VectorXd& y_train,
                     const Eigen::MatrixXd& Z_cal, const Eigen::VectorXd& y_cal,
                     const Eigen::VectorXd& x_test, const FitConfig& cfg, double alpha);

// Model application: mu(z) = sum over active terms of beta * prod z_l.
double predict_row(const std::vector<ActiveTerm>& terms, const Eigen::VectorXd& z);
Eigen::VectorXd predict(const std::vector<ActiveTerm>& terms, const Eigen::MatrixXd& Z);

struct PointRecord {
  int id = 0;
  ConformalSet set;
  bool has_truth = false;
  bool covered = false;
  double length = 0.0;
  double hull = 0.0;
  std::uint64_t kinks = 0;
  std::uint64_t nodes_visited = 0;
};

struct ExperimentReport {
  int points = 0;
  double coverage = 0.0;
  double mean_length = 0.0;
  double mean_hull = 0.0;
  double r2 = 0.0;
  double mean_kinks = 0.0;
  double mean_nodes = 0.0;
};

// Aggregates per-point records; r2 compares the supplied point predictions
// against the true responses.
ExperimentReport evaluate(const std::vector<PointRecord>& records,
                          const Eigen::VectorXd& y_true,
                          const Eigen::VectorXd& y_pred);

}  // namespace shimcp
