#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "shimcp/conformal.hpp"
#include "shimcp/pattern.hpp"
#include "shimcp/solver.hpp"

// Brute-force reference implementations used by tests and the audit mode.
// They share only the basic types with the main path: the feature space is
// enumerated explicitly and the lasso is solved on dense columns, so any
// disagreement indicts the homotopy or its tree search.
namespace shimcp::oracle {

struct DenseExpansion {
  std::vector<Pattern> patterns;  // order 1..d, lexicographic within order
  Eigen::MatrixXd columns;        // (n+1) x p
  int d = 0;
};

std::uint64_t expansion_size(int m, int d);

// Throws SizeError when the expansion would exceed `cap` columns.
DenseExpansion expand(const CovariateMatrix& Z, int d, std::uint64_t cap = 100000);

// Cyclic coordinate descent on the explicit columns, iterated until the KKT
// residual is below 1e-11 (tighter than the main solver). `warm_start` may
// carry a previous solution of matching size.
Eigen::VectorXd dense_lasso(const DenseExpansion& expansion, const Eigen::VectorXd& y_aug,
                            const FitConfig& cfg, const Eigen::VectorXd* warm_start = nullptr);

struct GridConformal {
  ConformalSet set;
  std::vector<std::uint8_t> accepted;  // per grid point
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.0;
};

// pi evaluated at grid_size equispaced tau values via full dense refits.
GridConformal grid_conformal(const DenseExpansion& expansion, const Eigen::VectorXd& y,
                             const FitConfig& cfg, double alpha, int grid_size,
                             double lo, double hi);

}  // namespace shimcp::oracle
