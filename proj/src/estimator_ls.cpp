#include "cthrv/estimator_ls.hpp"

#include <sstream>

#include "cthrv/errors.hpp"

namespace cthrv {

DataMatrices assemble_matrices(const Trajectory& traj) {
  const std::size_t n = traj.size();
  if (n < kMinLeastSquaresSamples) {
    std::ostringstream msg;
    msg << "least squares needs at least " << kMinLeastSquaresSamples << " samples, got " << n;
    throw TooFewSamplesError(msg.str());
  }
  const auto cols = static_cast<Eigen::Index>(n - 1);
  const auto v = traj.v();
  const auto s = traj.s();
  const auto vl = traj.v_lead();
  DataMatrices d;
  d.x.resize(2, cols);
  d.u.resize(1, cols);
  d.x_next.resize(2, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const auto k = static_cast<std::size_t>(j);
    d.x(0, j) = v[k];
    d.x(1, j) = s[k];
    d.u(0, j) = vl[k];
    d.x_next(0, j) = v[k + 1];
    d.x_next(1, j) = s[k + 1];
  }
  return d;
}

SpeedRowFit fit_speed_row(const DataMatrices& data) {
  const Eigen::Index rows = data.x.cols();
  Eigen::Matrix<double, Eigen::Dynamic, 3> regressor(rows, 3);
  regressor.col(0) = data.x.row(0).transpose();
  regressor.col(1) = data.x.row(1).transpose();
  regressor.col(2) = data.u.row(0).transpose();
  const Eigen::VectorXd target = data.x_next.row(0).transpose();

  const Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 3>> qr(regressor);
  // Singular values of the regressor equal those of its 3x3 R factor.
  const Eigen::Matrix3d r = qr.matrixR().topLeftCorner<3, 3>().triangularView<Eigen::Upper>();
  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3d>(r).singularValues();
  if (!(sv(2) >= kRankTolerance * sv(0)) || sv(0) == 0.0) {
    std::ostringstream msg;
    msg << "regressor is rank deficient (singular values " << sv.transpose()
        << "); parameters are not identifiable from this data";
    throw RankDeficientError(msg.str());
  }
  const Eigen::Vector3d coef = qr.solve(target);
  return {coef(0), coef(1), coef(2), sv};
}

ModelParams fit_least_squares(const Trajectory& traj) {
  const SpeedRowFit row = fit_speed_row(assemble_matrices(traj));
  StateMatrices m;
  m.dt = traj.dt();
  m.a << row.a11, row.a12,
         -m.dt, 1.0;
  m.b << row.b11, m.dt;
  return params_from_matrices(m);
}

}  // namespace cthrv
