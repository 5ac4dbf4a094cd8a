#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cthrv/model.hpp"
#include "cthrv/trajectory.hpp"

namespace cthrv {

/// Ramp from the current speed to `target` at `rate`, then hold.
struct SpeedEvent {
  double start;   // s
  double target;  // m/s
  double rate;    // m/s^2, > 0
};

struct LeadProfileSpec {
  double duration = 620.0;
  double dt = 0.1;
  double base_speed = 24.4;
  std::vector<SpeedEvent> events;
  std::uint64_t seed = 0;
  double jitter_std = 0.0;

  /// Throws ValidationError on out-of-domain fields or overlapping events.
  void validate() const;
};

/// Piecewise-linear lead speed with round(duration / dt) samples at t = i * dt,
/// plus optional seeded Gaussian jitter clipped at zero.
std::vector<double> generate_lead_profile(const LeadProfileSpec& spec);

/// 620 s at 10 Hz from 24.4 m/s. Three 6 m/s dips (down at 1.5 m/s^2,
/// straight back up at 1.0 m/s^2) start at t = 60, 240 and 420 s; in
/// between, the lead swings 2 m/s down and back at 0.5 m/s^2 every 15 s.
LeadProfileSpec benchmark_lead_spec();

/// Single 24.4 -> 20 -> 24.4 m/s dip over a 200 s horizon: down at 1.5 m/s^2
/// from t = 10 s, 5 s at the bottom, back up at 1.0 m/s^2. Used to probe
/// platoon string stability.
LeadProfileSpec standard_dip_spec();

/// Forward-Euler follower simulation. The output has one sample per lead
/// sample with v_l copied through. Throws TrajectoryCollapseError (vehicle 0)
/// if a gap reaches s <= 0.
Trajectory simulate_follower(const ModelParams& params, std::span<const double> v_lead, double v0,
                             double s0, double dt);

/// Same recurrence evaluated as x_{k+1} = A x_k + B u_k.
Trajectory simulate_state_space(const StateMatrices& m, std::span<const double> v_lead, double v0,
                                double s0);

struct PlatoonResult {
  std::vector<double> lead_speed;
  /// followers[i] trails followers[i - 1]; followers[0] trails the lead.
  std::vector<Trajectory> followers;
  /// max_k |v_k - v_eq| per follower.
  std::vector<double> peak_deviation;
  double v_eq;
};

inline constexpr double kPlatoonSettleTime = 5.0;

/// Homogeneous platoon behind `v_lead`. Followers start at equilibrium with
/// v_eq = v_lead[0]; the first 5 s of the lead series must be constant.
/// A gap collapse is rethrown with vehicle() set to the follower index.
PlatoonResult simulate_platoon(const ModelParams& params, std::size_t n_followers,
                               std::span<const double> v_lead, double dt);

}  // namespace cthrv
