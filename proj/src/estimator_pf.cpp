#include "cthrv/estimator_pf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cthrv/errors.hpp"

namespace cthrv {

namespace {

double gaussian_density(double residual, double sigma) {
  const double z = residual / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

std::size_t floor_parameters(Eigen::Ref<ParticleStates> states) {
  std::size_t clamped = 0;
  for (Eigen::Index c = kK1; c <= kTau; ++c) {
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
      if (states(i, c) < kParameterFloor) {
        states(i, c) = kParameterFloor;
        ++clamped;
      }
    }
  }
  return clamped;
}

}  // namespace

void PFConfig::validate() const {
  if (n_particles < 2) throw ValidationError("particle filter needs at least 2 particles");
  if ((init_std.array() < 0.0).any() || (q_std.array() < 0.0).any() || !init_std.allFinite() ||
      !q_std.allFinite()) {
    throw ValidationError("particle filter std entries must be finite and >= 0");
  }
  if (!(r_std.array() > 0.0).all() || !r_std.allFinite()) {
    throw ValidationError("measurement noise std must be > 0 for both s and v");
  }
  if (!init_mean.allFinite()) throw ValidationError("particle filter initial mean must be finite");
}

ParticleEnsemble ParticleEnsemble::uniform(ParticleStates states) {
  const auto n = states.rows();
  return {std::move(states), Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
}

ParticleEnsemble pf_initialize(std::size_t n, const Vector5d& mean, const Vector5d& std,
                               Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ParticleStates states(static_cast<Eigen::Index>(n), 5);
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    for (Eigen::Index c = 0; c < 5; ++c) states(i, c) = mean(c) + std(c) * normal(rng);
  }
  floor_parameters(states);
  return ParticleEnsemble::uniform(std::move(states));
}

ParticleEnsemble pf_predict(const ParticleEnsemble& ensemble, double v_lead, double dt,
                            const Vector5d& q_std, Rng& rng, std::size_t* clamped) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ParticleEnsemble out = ensemble;
  auto& x = out.states;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double s = x(i, kGap);
    const double v = x(i, kSpeed);
    const auto theta = ModelParams::unchecked(x(i, kK1), x(i, kK2), x(i, kTau));
    const double dv = v_lead - v;
    x(i, kGap) = s + dt * dv;
    x(i, kSpeed) = v + dt * acceleration(theta, s, v, dv);
    for (Eigen::Index c = 0; c < 5; ++c) x(i, c) += q_std(c) * normal(rng);
  }
  const std::size_t n_clamped = floor_parameters(x);
  if (clamped != nullptr) *clamped = n_clamped;
  return out;
}

ParticleEnsemble pf_update(const ParticleEnsemble& ensemble, double s_meas, double v_meas,
                           const Eigen::Vector2d& r_std, std::size_t step) {
  if (!(r_std.array() > 0.0).all()) throw ValidationError("measurement noise std must be > 0");
  ParticleEnsemble out = ensemble;
  double total = 0.0;
  for (Eigen::Index i = 0; i < out.states.rows(); ++i) {
    const double like = gaussian_density(s_meas - out.states(i, kGap), r_std(0)) *
                        gaussian_density(v_meas - out.states(i, kSpeed), r_std(1));
    out.weights(i) *= like;
    total += out.weights(i);
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::ostringstream msg;
    msg << "particle weights collapsed at step " << step
        << ": no particle is compatible with measurement (s=" << s_meas << ", v=" << v_meas << ")";
    throw WeightCollapseError(step, msg.str());
  }
  out.weights /= total;
  return out;
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights, std::size_t count,
                                             double u) {
  const std::size_t n = weights.size();
  if (n == 0 || count == 0) return {};
  std::vector<std::size_t> idx(count);
  // Work in units of 1/count so that equal weights give exact integer edges.
  const double scale = static_cast<double>(count);
  const double offset = u * scale;
  std::size_t j = 0;
  double cumulative = weights[0] * scale;
  for (std::size_t i = 0; i < count; ++i) {
    const double position = offset + static_cast<double>(i);
    while (position >= cumulative && j + 1 < n) cumulative += weights[++j] * scale;
    idx[i] = j;
  }
  return idx;
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights, double u) {
  return systematic_resample(weights, weights.size(), u);
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights, Rng& rng) {
  std::uniform_real_distribution<double> offset(0.0, 1.0 / static_cast<double>(weights.size()));
  return systematic_resample(weights, offset(rng));
}

ParticleEnsemble resample(const ParticleEnsemble& ensemble, std::span<const std::size_t> indices) {
  ParticleStates states(static_cast<Eigen::Index>(indices.size()), 5);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    states.row(static_cast<Eigen::Index>(i)) =
        ensemble.states.row(static_cast<Eigen::Index>(indices[i]));
  }
  return ParticleEnsemble::uniform(std::move(states));
}

PosteriorSummary summarize(const ParticleEnsemble& ensemble) {
  const Eigen::VectorXd& w = ensemble.weights;
  const Vector5d mean = ensemble.states.transpose() * w;
  const ParticleStates centered = ensemble.states.rowwise() - mean.transpose();
  const Vector5d var = centered.array().square().matrix().transpose() * w;
  return {mean, var.cwiseMax(0.0).cwiseSqrt()};
}

InstabilityStats instability_probability(const ParticleEnsemble& ensemble,
                                         DegeneratePolicy policy) {
  std::size_t unstable = 0;
  std::size_t degenerate = 0;
  const std::size_t n = ensemble.size();
  for (Eigen::Index i = 0; i < ensemble.states.rows(); ++i) {
    const double k1 = ensemble.states(i, kK1);
    const double tau = ensemble.states(i, kTau);
    if (k1 <= kParameterFloor || tau <= kParameterFloor) {
      ++degenerate;
      if (policy == DegeneratePolicy::CountUnstable) ++unstable;
      continue;
    }
    const auto verdict = string_stability(ModelParams::unchecked(k1, ensemble.states(i, kK2), tau));
    if (verdict.classification == Stability::Unstable) ++unstable;
  }
  const std::size_t denom = policy == DegeneratePolicy::Exclude ? n - degenerate : n;
  const double p = denom > 0 ? static_cast<double>(unstable) / static_cast<double>(denom) : 0.0;
  return {p, n > 0 ? static_cast<double>(degenerate) / static_cast<double>(n) : 0.0};
}

ParticleFilter::ParticleFilter(PFConfig config, double dt)
    : config_(std::move(config)), dt_(dt), rng_(config_.seed) {
  config_.validate();
  if (!(dt > 0.0)) throw ValidationError("particle filter timestep must be > 0");
}

void ParticleFilter::push(const Measurement& m) {
  if (steps_ == 0) {
    Vector5d mean = config_.init_mean;
    if (config_.state_from_data) {
      mean(kGap) = m.s;
      mean(kSpeed) = m.v;
    }
    ensemble_ = pf_initialize(config_.n_particles, mean, config_.init_std, rng_);
  } else {
    std::size_t clamped = 0;
    ensemble_ = pf_predict(ensemble_, last_lead_, dt_, config_.q_std, rng_, &clamped);
    clamped_ += clamped;
    ensemble_ = pf_update(ensemble_, m.s, m.v, config_.r_std, steps_);
    const auto idx = systematic_resample(
        std::span<const double>(ensemble_.weights.data(), ensemble_.size()), rng_);
    ensemble_ = resample(ensemble_, idx);
  }
  last_lead_ = m.v_lead;
  ++steps_;
}

ModelParams ParticleFilter::params() const {
  const Vector5d mean = posterior().mean;
  return ModelParams::unchecked(mean(kK1), mean(kK2), mean(kTau));
}

InstabilityStats ParticleFilter::instability() const {
  return instability_probability(ensemble_, config_.degenerate);
}

PFResult fit_particle_filter(const Trajectory& traj, const PFConfig& config) {
  ParticleFilter filter(config, traj.dt());
  const auto n = static_cast<Eigen::Index>(traj.size());
  Eigen::Matrix<double, Eigen::Dynamic, 5> means(n, 5);
  Eigen::Matrix<double, Eigen::Dynamic, 5> stds(n, 5);
  const auto s = traj.s();
  const auto v = traj.v();
  const auto vl = traj.v_lead();
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    filter.push({s[i], v[i], vl[i]});
    const auto post = filter.posterior();
    means.row(k) = post.mean.transpose();
    stds.row(k) = post.std.transpose();
  }
  const auto inst = filter.instability();
  return {std::move(means), std::move(stds), filter.params(), inst.probability,
          inst.degenerate_fraction, filter.clamp_events()};
}

}  // namespace cthrv
