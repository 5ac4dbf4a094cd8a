#pragma once

// Constant-time-headway relative-velocity (CTH-RV) car-following model.
//
//   dv/dt = k1 * (s - tau * v) + k2 * dv
//
// Sign convention used throughout the toolkit: dv = v_lead - v_follower.

#include <Eigen/Dense>
#include <string_view>

namespace cthrv {

/// Parameter triple (k1 [1/s^2], k2 [1/s], tau [s]).
class ModelParams {
 public:
  /// Throws ValidationError unless k1 > 0, k2 >= 0, tau > 0.
  ModelParams(double k1, double k2, double tau);

  /// Skips validation. For estimator output (which may legitimately be
  /// non-physical) and for structural tests.
  static ModelParams unchecked(double k1, double k2, double tau) noexcept;

  double k1() const noexcept { return k1_; }
  double k2() const noexcept { return k2_; }
  double tau() const noexcept { return tau_; }

  bool is_physical() const noexcept { return k1_ > 0.0 && k2_ >= 0.0 && tau_ > 0.0; }

  Eigen::Vector3d as_vector() const { return {k1_, k2_, tau_}; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  struct NoCheck {};
  ModelParams(double k1, double k2, double tau, NoCheck) noexcept : k1_(k1), k2_(k2), tau_(tau) {}

  double k1_;
  double k2_;
  double tau_;
};

struct VehicleState {
  VehicleState(double speed, double gap);

  double v;  // follower speed, m/s
  double s;  // space gap, m
};

/// Discrete dynamics x_{k+1} = a x_k + b u_k with x = [v, s]^T, u = v_lead.
struct StateMatrices {
  Eigen::Matrix2d a;
  Eigen::Vector2d b;
  double dt;
};

enum class Stability { Stable, Unstable, Marginal };

std::string_view to_string(Stability s) noexcept;

struct StabilityVerdict {
  double lambda;
  Stability classification;
};

inline constexpr double kMarginalTolerance = 1e-12;
inline constexpr double kDegenerateA12 = 1e-12;

/// Model acceleration, m/s^2. `dv` is lead speed minus follower speed.
double acceleration(const ModelParams& params, double s, double v, double dv) noexcept;

/// Forward-Euler state matrices for timestep `dt` (> 0).
StateMatrices build_state_matrices(const ModelParams& params, double dt);

/// Inverse of build_state_matrices using only the first row of a and b.
/// Throws DegenerateDynamicsError when |a(0,1)| < kDegenerateA12.
/// The result is not validated: noisy fits may give non-physical values.
ModelParams params_from_matrices(const StateMatrices& m);

/// Head-to-tail string stability. lambda > 0 means perturbations grow
/// upstream through a platoon. Throws ValidationError if k1 <= 0 or tau <= 0.
StabilityVerdict string_stability(const ModelParams& params, double tol = kMarginalTolerance);

}  // namespace cthrv
