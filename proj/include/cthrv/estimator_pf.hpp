#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cthrv/model.hpp"
#include "cthrv/trajectory.hpp"

namespace cthrv {

// Augmented state layout, one row per particle: (s, v, k1, k2, tau).
enum AugmentedIndex : Eigen::Index { kGap = 0, kSpeed = 1, kK1 = 2, kK2 = 3, kTau = 4 };

using Vector5d = Eigen::Matrix<double, 5, 1>;
using ParticleStates = Eigen::Matrix<double, Eigen::Dynamic, 5>;
using Rng = std::mt19937_64;

inline constexpr double kParameterFloor = 1e-6;

/// How particles whose k1 or tau sits on the positivity floor enter the
/// string-instability fraction.
enum class DegeneratePolicy {
  Exclude,        // dropped from numerator and denominator
  CountUnstable,  // counted as unstable
  CountStable,    // counted as stable
};

/// Filter settings. Every noise entry is a standard deviation.
struct PFConfig {
  std::size_t n_particles = 500;
  Vector5d init_mean = (Vector5d() << 0.0, 0.0, 0.1, 0.1, 1.4).finished();
  Vector5d init_std = (Vector5d() << 0.5, 0.5, 0.2, 0.2, 0.3).finished();
  Vector5d q_std = (Vector5d() << 0.2, 0.1, 0.01, 0.01, 0.01).finished();
  Eigen::Vector2d r_std{0.2, 0.1};
  std::uint64_t seed = 0;
  /// Replace init_mean's (s, v) with the first measurement.
  bool state_from_data = true;
  DegeneratePolicy degenerate = DegeneratePolicy::Exclude;

  void validate() const;
};

struct ParticleEnsemble {
  ParticleStates states;
  Eigen::VectorXd weights;

  std::size_t size() const noexcept { return static_cast<std::size_t>(states.rows()); }
  static ParticleEnsemble uniform(ParticleStates states);
};

/// Draws n particles from N(mean, diag(std^2)) with uniform weights; the
/// parameter coordinates are floored at kParameterFloor.
ParticleEnsemble pf_initialize(std::size_t n, const Vector5d& mean, const Vector5d& std, Rng& rng);

/// One Euler step of each particle under its own parameters with lead speed
/// `v_lead`, then additive N(0, q_std^2) noise on all five coordinates, then
/// the parameter floor. Returns the number of coordinates clamped through
/// `clamped` when non-null.
ParticleEnsemble pf_predict(const ParticleEnsemble& ensemble, double v_lead, double dt,
                            const Vector5d& q_std, Rng& rng, std::size_t* clamped = nullptr);

/// Multiplies each weight by the Gaussian likelihood of the measured (s, v)
/// and renormalises. Throws WeightCollapseError (tagged with `step`) if the
/// total weight underflows to zero.
ParticleEnsemble pf_update(const ParticleEnsemble& ensemble, double s_meas, double v_meas,
                           const Eigen::Vector2d& r_std, std::size_t step = 0);

/// Systematic resampling: `count` positions u + i / count, with offset u in
/// [0, 1/count), are matched against the cumulative weights. Indices come
/// out non-decreasing.
std::vector<std::size_t> systematic_resample(std::span<const double> weights, std::size_t count,
                                             double u);
/// count = weights.size().
std::vector<std::size_t> systematic_resample(std::span<const double> weights, double u);
std::vector<std::size_t> systematic_resample(std::span<const double> weights, Rng& rng);

/// Copies the selected rows and resets weights to 1/N.
ParticleEnsemble resample(const ParticleEnsemble& ensemble, std::span<const std::size_t> indices);

struct PosteriorSummary {
  Vector5d mean;
  Vector5d std;
};

PosteriorSummary summarize(const ParticleEnsemble& ensemble);

struct InstabilityStats {
  double probability;          // unstable fraction under the policy
  double degenerate_fraction;  // share of particles on the parameter floor
};

InstabilityStats instability_probability(const ParticleEnsemble& ensemble, DegeneratePolicy policy);

/// One measurement for the streaming filter.
struct Measurement {
  double s;
  double v;
  double v_lead;
};

/// Incremental joint state/parameter filter. The first push initialises the
/// ensemble around that measurement; every later push runs predict with the
/// previous lead speed, update, and systematic resampling.
class ParticleFilter {
 public:
  ParticleFilter(PFConfig config, double dt);

  void push(const Measurement& m);

  bool initialized() const noexcept { return steps_ > 0; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t clamp_events() const noexcept { return clamped_; }
  const ParticleEnsemble& ensemble() const noexcept { return ensemble_; }

  PosteriorSummary posterior() const { return summarize(ensemble_); }
  /// Posterior mean of (k1, k2, tau), unvalidated.
  ModelParams params() const;
  InstabilityStats instability() const;

 private:
  PFConfig config_;
  double dt_;
  Rng rng_;
  ParticleEnsemble ensemble_;
  double last_lead_ = 0.0;
  std::size_t steps_ = 0;
  std::size_t clamped_ = 0;
};

struct PFResult {
  /// Row k holds the posterior after measurement k (row 0: initial ensemble).
  Eigen::Matrix<double, Eigen::Dynamic, 5> mean;
  Eigen::Matrix<double, Eigen::Dynamic, 5> std;
  ModelParams params;
  double instability_probability;
  double degenerate_fraction;
  std::size_t clamp_events;
};

/// Runs the streaming filter over the whole trajectory.
PFResult fit_particle_filter(const Trajectory& traj, const PFConfig& config = {});

}  // namespace cthrv
