#pragma once

#include <Eigen/Dense>

#include "cthrv/model.hpp"
#include "cthrv/trajectory.hpp"

namespace cthrv {

/// Column-wise data matrices: x = [v_k; s_k], u = [v_l,k], x_next = [v_k+1; s_k+1]
/// for k = 0 .. n-2.
struct DataMatrices {
  Eigen::Matrix<double, 2, Eigen::Dynamic> x;
  Eigen::Matrix<double, 1, Eigen::Dynamic> u;
  Eigen::Matrix<double, 2, Eigen::Dynamic> x_next;
};

inline constexpr std::size_t kMinLeastSquaresSamples = 4;
inline constexpr double kRankTolerance = 1e-10;

/// Throws TooFewSamplesError when traj has fewer than 4 samples.
DataMatrices assemble_matrices(const Trajectory& traj);

/// Free entries of the speed row of the dynamics: v_{k+1} = a11 v_k + a12 s_k + b11 v_l,k.
struct SpeedRowFit {
  double a11;
  double a12;
  double b11;
  /// Singular values of the n-1 x 3 regressor, descending.
  Eigen::Vector3d singular_values;
};

/// Least-squares fit of the speed row by column-pivoted QR. The spacing row
/// of the dynamics is fixed by the sample period and carries no unknowns.
/// Throws RankDeficientError if sigma_min < 1e-10 sigma_max.
SpeedRowFit fit_speed_row(const DataMatrices& data);

/// Closed-form parameter estimate. No positivity projection is applied;
/// non-physical output means the data did not identify the model.
/// Throws TooFewSamplesError, RankDeficientError or DegenerateDynamicsError.
ModelParams fit_least_squares(const Trajectory& traj);

}  // namespace cthrv
