#include "cthrv/model.hpp"

#include <cmath>
#include <sstream>

#include "cthrv/errors.hpp"

namespace cthrv {

ModelParams::ModelParams(double k1, double k2, double tau) : k1_(k1), k2_(k2), tau_(tau) {
  if (!(k1 > 0.0) || !(k2 >= 0.0) || !(tau > 0.0) || !std::isfinite(k1) || !std::isfinite(k2) ||
      !std::isfinite(tau)) {
    std::ostringstream msg;
    msg << "invalid model parameters (k1=" << k1 << ", k2=" << k2 << ", tau=" << tau
        << "): need k1 > 0, k2 >= 0, tau > 0";
    throw ValidationError(msg.str());
  }
}

ModelParams ModelParams::unchecked(double k1, double k2, double tau) noexcept {
  return ModelParams(k1, k2, tau, NoCheck{});
}

VehicleState::VehicleState(double speed, double gap) : v(speed), s(gap) {
  if (!(gap > 0.0) || !(speed >= 0.0)) {
    throw ValidationError("vehicle state needs s > 0 and v >= 0");
  }
}

std::string_view to_string(Stability s) noexcept {
  switch (s) {
    case Stability::Stable:
      return "stable";
    case Stability::Unstable:
      return "unstable";
    case Stability::Marginal:
      return "marginal";
  }
  return "unknown";
}

double acceleration(const ModelParams& params, double s, double v, double dv) noexcept {
  return params.k1() * (s - params.tau() * v) + params.k2() * dv;
}

StateMatrices build_state_matrices(const ModelParams& params, double dt) {
  if (!(dt > 0.0)) {
    throw ValidationError("timestep must be positive");
  }
  const double k1 = params.k1();
  const double k2 = params.k2();
  StateMatrices m;
  m.dt = dt;
  m.a << 1.0 - (k1 * params.tau() + k2) * dt, k1 * dt,
         -dt, 1.0;
  m.b << k2 * dt, dt;
  return m;
}

ModelParams params_from_matrices(const StateMatrices& m) {
  const double a11 = m.a(0, 0);
  const double a12 = m.a(0, 1);
  const double b11 = m.b(0);
  if (std::abs(a12) < kDegenerateA12) {
    throw DegenerateDynamicsError("a12 is zero: time gap is undefined");
  }
  return ModelParams::unchecked(a12 / m.dt, b11 / m.dt, (1.0 - b11 - a11) / a12);
}

StabilityVerdict string_stability(const ModelParams& params, double tol) {
  const double k1 = params.k1();
  const double k2 = params.k2();
  const double tau = params.tau();
  if (!(k1 > 0.0) || !(tau > 0.0)) {
    throw ValidationError("string stability needs k1 > 0 and tau > 0");
  }
  const double lambda = (k1 / (-k1 * k1 * k1 * tau * tau * tau)) *
                        (k1 * k1 * tau * tau / 2.0 + k1 * k2 * tau - k1);
  Stability cls = Stability::Marginal;
  if (lambda > tol) {
    cls = Stability::Unstable;
  } else if (lambda < -tol) {
    cls = Stability::Stable;
  }
  return {lambda, cls};
}

}  // namespace cthrv
