#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cthrv/model.hpp"
#include "cthrv/trajectory.hpp"

namespace cthrv {

struct Bounds {
  double low;
  double high;
};

struct BatchConfig {
  /// Search box for (k1, k2, tau).
  std::array<Bounds, 3> bounds{{{0.001, 2.0}, {0.001, 2.0}, {0.1, 3.0}}};
  std::size_t n_starts = 10;
  std::size_t max_evals = 2000;
  std::uint64_t seed = 0;
  double ftol = 1e-8;
  double xtol = 1e-8;
  /// Worker threads for independent starts; 0 means CTHRV_THREADS or all cores.
  std::size_t threads = 0;

  void validate() const;
};

struct StartResult {
  ModelParams initial;
  ModelParams final;
  double objective;
  std::size_t evaluations;
  /// Best objective seen after each simplex iteration.
  std::vector<double> best_trace;
};

struct BatchResult {
  ModelParams params;
  double objective;
  std::vector<StartResult> per_start;
};

/// RMSE between measured gaps and the gaps of a follower simulated from
/// (v[0], s[0]) under the recorded lead speed, over all n samples.
/// Returns +infinity if the simulated gap collapses.
double rmse_spacing(const ModelParams& params, const Trajectory& traj);

struct NelderMeadOptions {
  std::size_t max_evals = 2000;
  double ftol = 1e-8;
  double xtol = 1e-8;
};

struct NelderMeadResult {
  Eigen::Vector3d x;
  double value;
  std::size_t evaluations;
  std::vector<double> best_trace;
};

/// Nelder-Mead simplex descent in 3-D. Every trial point is clipped into the
/// box before evaluation. Stops when both the spread of simplex values is
/// <= ftol and the simplex diameter (inf-norm from the best vertex) is
/// <= xtol, or when the evaluation budget is spent. A converged simplex is
/// rebuilt around its best vertex until a restart stops improving.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::Vector3d&)>& objective,
                             const Eigen::Vector3d& start, const std::array<Bounds, 3>& bounds,
                             const NelderMeadOptions& options);

/// Multi-start bounded Nelder-Mead on rmse_spacing. Start points are drawn
/// uniformly from the bounds with `seed`; the best final objective wins with
/// ties going to the lowest start index.
BatchResult fit_batch(const Trajectory& traj, const BatchConfig& config = {});

/// Same as fit_batch but with caller-supplied start points (no sampling).
BatchResult fit_batch_from(const Trajectory& traj, const BatchConfig& config,
                           const std::vector<ModelParams>& starts);

/// Worker count honouring CTHRV_THREADS, never more than `jobs`.
std::size_t resolve_thread_count(std::size_t requested, std::size_t jobs);

}  // namespace cthrv
