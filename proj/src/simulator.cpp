#include "cthrv/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "cthrv/errors.hpp"

namespace cthrv {

namespace {

[[noreturn]] void throw_collapse(std::size_t vehicle, std::size_t step, double gap) {
  std::ostringstream msg;
  msg << "trajectory collapse: vehicle " << vehicle << " gap " << gap << " m at step " << step;
  throw TrajectoryCollapseError(vehicle, step, msg.str());
}

void check_inputs(std::span<const double> v_lead, double v0, double s0, double dt) {
  if (v_lead.size() < 2) throw ValidationError("lead speed series needs at least 2 samples");
  if (!(v0 >= 0.0)) throw ValidationError("initial speed must be >= 0");
  if (!(s0 > 0.0)) throw ValidationError("initial gap must be > 0");
  if (!(dt > 0.0)) throw ValidationError("timestep must be > 0");
}

std::size_t sample_count(double duration, double dt) {
  return static_cast<std::size_t>(std::llround(duration / dt));
}

}  // namespace

void LeadProfileSpec::validate() const {
  if (!(duration > 0.0)) throw ValidationError("lead profile duration must be > 0");
  if (!(dt > 0.0)) throw ValidationError("lead profile dt must be > 0");
  if (!(base_speed >= 0.0)) throw ValidationError("lead profile base speed must be >= 0");
  if (!(jitter_std >= 0.0)) throw ValidationError("lead profile jitter std must be >= 0");
  if (sample_count(duration, dt) < 2) throw ValidationError("lead profile needs >= 2 samples");
  double speed = base_speed;
  double busy_until = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (!(e.rate > 0.0)) throw ValidationError("event ramp rate must be > 0");
    if (!(e.target >= 0.0)) throw ValidationError("event target speed must be >= 0");
    if (e.start < busy_until) {
      std::ostringstream msg;
      msg << "event " << i << " at t=" << e.start << " overlaps the previous ramp (ends at "
          << busy_until << ")";
      throw ValidationError(msg.str());
    }
    busy_until = e.start + std::abs(e.target - speed) / e.rate;
    speed = e.target;
  }
}

std::vector<double> generate_lead_profile(const LeadProfileSpec& spec) {
  spec.validate();
  const std::size_t n = sample_count(spec.duration, spec.dt);
  std::vector<double> out(n);

  std::size_t next = 0;
  double from = spec.base_speed;  // speed at the start of the active ramp
  const SpeedEvent* active = nullptr;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * spec.dt;
    while (next < spec.events.size() && spec.events[next].start <= t) {
      if (active != nullptr) from = active->target;
      active = &spec.events[next++];
    }
    if (active == nullptr) {
      out[i] = spec.base_speed;
      continue;
    }
    const double gap = active->target - from;
    const double moved = active->rate * (t - active->start);
    out[i] = moved >= std::abs(gap) ? active->target : from + std::copysign(moved, gap);
  }

  if (spec.jitter_std > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.jitter_std);
    for (double& v : out) v = std::max(0.0, v + noise(rng));
  }
  return out;
}

LeadProfileSpec benchmark_lead_spec() {
  LeadProfileSpec spec;
  spec.duration = 620.0;
  spec.dt = 0.1;
  spec.base_speed = 24.4;

  constexpr double kDipDrop = 6.0;
  constexpr double kDipDecel = 1.5;
  constexpr double kDipAccel = 1.0;
  constexpr double kDipLength = kDipDrop / kDipDecel + kDipDrop / kDipAccel;
  // Mild speed swings between dips keep every parameter excited.
  constexpr double kSwing = 2.0;
  constexpr double kSwingRate = 0.5;
  constexpr double kSwingPeriod = 15.0;
  constexpr double kSwingRamp = kSwing / kSwingRate;

  const double base = spec.base_speed;
  double window_start = 0.0;
  for (double dip : {60.0, 240.0, 420.0, spec.duration}) {
    bool low = false;
    for (double t = window_start + kSwingPeriod; t + kSwingRamp <= dip - 1.0; t += kSwingPeriod) {
      const bool closing = !low;  // a swing down must also have room to come back
      if (closing && t + kSwingPeriod + kSwingRamp > dip - 1.0) break;
      spec.events.push_back({t, low ? base : base - kSwing, kSwingRate});
      low = !low;
    }
    if (dip >= spec.duration) break;
    spec.events.push_back({dip, base - kDipDrop, kDipDecel});
    spec.events.push_back({dip + kDipDrop / kDipDecel, base, kDipAccel});
    window_start = dip + kDipLength;
  }
  return spec;
}

LeadProfileSpec standard_dip_spec() {
  LeadProfileSpec spec;
  spec.duration = 200.0;
  spec.dt = 0.1;
  spec.base_speed = 24.4;
  constexpr double kStart = 10.0;
  constexpr double kBottom = 20.0;
  constexpr double kHold = 5.0;
  spec.events.push_back({kStart, kBottom, 1.5});
  spec.events.push_back({kStart + (spec.base_speed - kBottom) / 1.5 + kHold, spec.base_speed, 1.0});
  return spec;
}

Trajectory simulate_follower(const ModelParams& params, std::span<const double> v_lead, double v0,
                             double s0, double dt) {
  check_inputs(v_lead, v0, s0, dt);
  const std::size_t n = v_lead.size();
  std::vector<double> v(n);
  std::vector<double> s(n);
  v[0] = v0;
  s[0] = s0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double dv = v_lead[k] - v[k];
    v[k + 1] = v[k] + dt * acceleration(params, s[k], v[k], dv);
    s[k + 1] = s[k] + dt * dv;
    if (!(s[k + 1] > 0.0)) throw_collapse(0, k + 1, s[k + 1]);
  }
  return Trajectory(dt, 0.0, std::move(v), std::move(s), {v_lead.begin(), v_lead.end()});
}

Trajectory simulate_state_space(const StateMatrices& m, std::span<const double> v_lead, double v0,
                                double s0) {
  check_inputs(v_lead, v0, s0, m.dt);
  const std::size_t n = v_lead.size();
  std::vector<double> v(n);
  std::vector<double> s(n);
  Eigen::Vector2d x(v0, s0);
  v[0] = v0;
  s[0] = s0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    x = m.a * x + m.b * v_lead[k];
    v[k + 1] = x(0);
    s[k + 1] = x(1);
    if (!(s[k + 1] > 0.0)) throw_collapse(0, k + 1, s[k + 1]);
  }
  return Trajectory(m.dt, 0.0, std::move(v), std::move(s), {v_lead.begin(), v_lead.end()});
}

PlatoonResult simulate_platoon(const ModelParams& params, std::size_t n_followers,
                               std::span<const double> v_lead, double dt) {
  if (n_followers < 2) throw ValidationError("platoon needs at least 2 followers");
  if (!(dt > 0.0)) throw ValidationError("timestep must be > 0");
  const std::size_t settle = sample_count(kPlatoonSettleTime, dt);
  if (v_lead.size() <= settle) throw ValidationError("lead series shorter than the settle window");
  const double v_eq = v_lead[0];
  for (std::size_t k = 0; k <= settle; ++k) {
    if (v_lead[k] != v_eq) {
      throw ValidationError("lead series must hold a constant speed for the first 5 s");
    }
  }

  PlatoonResult result;
  result.v_eq = v_eq;
  result.lead_speed.assign(v_lead.begin(), v_lead.end());
  std::span<const double> ahead = result.lead_speed;
  result.followers.reserve(n_followers);
  for (std::size_t i = 0; i < n_followers; ++i) {
    try {
      result.followers.push_back(simulate_follower(params, ahead, v_eq, params.tau() * v_eq, dt));
    } catch (const TrajectoryCollapseError& e) {
      std::ostringstream msg;
      msg << "platoon follower " << i << " collapsed at step " << e.step();
      throw TrajectoryCollapseError(i, e.step(), msg.str());
    }
    const auto v = result.followers.back().v();
    double peak = 0.0;
    for (double vk : v) peak = std::max(peak, std::abs(vk - v_eq));
    result.peak_deviation.push_back(peak);
    ahead = v;
  }
  return result;
}

}  // namespace cthrv
