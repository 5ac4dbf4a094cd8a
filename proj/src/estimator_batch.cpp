#include "cthrv/estimator_batch.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "cthrv/errors.hpp"
#include "cthrv/simulator.hpp"

namespace cthrv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::Vector3d clip(Eigen::Vector3d x, const std::array<Bounds, 3>& bounds) {
  for (int i = 0; i < 3; ++i) x(i) = std::clamp(x(i), bounds[i].low, bounds[i].high);
  return x;
}

}  // namespace

void BatchConfig::validate() const {
  for (const auto& b : bounds) {
    if (!(b.low > 0.0) || !(b.low < b.high)) {
      throw ValidationError("batch bounds need 0 < low < high for every parameter");
    }
  }
  if (n_starts < 1) throw ValidationError("batch needs at least one start");
  if (max_evals < 100) throw ValidationError("batch max_evals must be >= 100");
  if (!(ftol >= 0.0) || !(xtol >= 0.0)) throw ValidationError("batch tolerances must be >= 0");
}

double rmse_spacing(const ModelParams& params, const Trajectory& traj) {
  try {
    const Trajectory sim =
        simulate_follower(params, traj.v_lead(), traj.v()[0], traj.s()[0], traj.dt());
    const auto measured = traj.s();
    const auto simulated = sim.s();
    double sum = 0.0;
    for (std::size_t i = 0; i < measured.size(); ++i) {
      const double e = measured[i] - simulated[i];
      sum += e * e;
    }
    const double value = std::sqrt(sum / static_cast<double>(measured.size()));
    return std::isfinite(value) ? value : kInf;
  } catch (const TrajectoryCollapseError&) {
    return kInf;
  }
}

NelderMeadResult nelder_mead(const std::function<double(const Eigen::Vector3d&)>& objective,
                             const Eigen::Vector3d& start, const std::array<Bounds, 3>& bounds,
                             const NelderMeadOptions& options) {
  constexpr double kReflect = 1.0;
  constexpr double kExpand = 2.0;
  constexpr double kContract = 0.5;
  constexpr double kShrink = 0.5;
  constexpr double kInitialStep = 0.1;

  NelderMeadResult out;
  out.evaluations = 0;
  auto eval = [&](const Eigen::Vector3d& x) {
    ++out.evaluations;
    return objective(x);
  };

  std::array<Eigen::Vector3d, 4> pts;
  std::array<double, 4> val{};
  auto build_simplex = [&](const Eigen::Vector3d& base) {
    pts[0] = base;
    for (int i = 0; i < 3; ++i) {
      Eigen::Vector3d p = pts[0];
      const double span = bounds[i].high - bounds[i].low;
      double step = p(i) != 0.0 ? kInitialStep * std::abs(p(i)) : 1e-3 * span;
      if (p(i) + step > bounds[i].high) step = -step;
      p(i) += step;
      pts[i + 1] = clip(p, bounds);
    }
  };
  build_simplex(clip(start, bounds));
  for (int i = 0; i < 4; ++i) val[i] = eval(pts[i]);

  std::array<int, 4> order{0, 1, 2, 3};
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return val[a] < val[b]; });
    std::array<Eigen::Vector3d, 4> p2;
    std::array<double, 4> v2{};
    for (int i = 0; i < 4; ++i) {
      p2[i] = pts[order[i]];
      v2[i] = val[order[i]];
    }
    pts = p2;
    val = v2;
  };
  sort_simplex();
  out.best_trace.push_back(val[0]);

  double last_converged = kInf;
  while (out.evaluations < options.max_evals) {
    double f_spread = 0.0;
    double x_spread = 0.0;
    for (int i = 1; i < 4; ++i) {
      f_spread = std::max(f_spread, std::isfinite(val[i]) ? std::abs(val[i] - val[0]) : kInf);
      x_spread = std::max(x_spread, (pts[i] - pts[0]).cwiseAbs().maxCoeff());
    }
    if (std::isfinite(val[0]) && f_spread <= options.ftol && x_spread <= options.xtol) {
      // clipping can flatten the simplex onto a face; restart until no progress
      if (val[0] >= last_converged - options.ftol) break;
      last_converged = val[0];
      build_simplex(pts[0]);
      for (int i = 1; i < 4; ++i) val[i] = out.evaluations < options.max_evals ? eval(pts[i]) : kInf;
      sort_simplex();
      continue;
    }

    const Eigen::Vector3d centroid = (pts[0] + pts[1] + pts[2]) / 3.0;
    const Eigen::Vector3d xr = clip(centroid + kReflect * (centroid - pts[3]), bounds);
    const double fr = eval(xr);

    if (fr < val[0]) {
      const Eigen::Vector3d xe = clip(centroid + kExpand * (centroid - pts[3]), bounds);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[3] = xe;
        val[3] = fe;
      } else {
        pts[3] = xr;
        val[3] = fr;
      }
    } else if (fr < val[2]) {
      pts[3] = xr;
      val[3] = fr;
    } else {
      bool accepted = false;
      if (fr < val[3]) {
        const Eigen::Vector3d xc = clip(centroid + kContract * (xr - centroid), bounds);
        const double fc = eval(xc);
        if (fc <= fr) {
          pts[3] = xc;
          val[3] = fc;
          accepted = true;
        }
      } else {
        const Eigen::Vector3d xc = clip(centroid + kContract * (pts[3] - centroid), bounds);
        const double fc = eval(xc);
        if (fc < val[3]) {
          pts[3] = xc;
          val[3] = fc;
          accepted = true;
        }
      }
      if (!accepted) {
        for (int i = 1; i < 4; ++i) {
          pts[i] = clip(pts[0] + kShrink * (pts[i] - pts[0]), bounds);
          val[i] = eval(pts[i]);
        }
      }
    }
    sort_simplex();
    out.best_trace.push_back(val[0]);
  }

  out.x = pts[0];
  out.value = val[0];
  return out;
}

std::size_t resolve_thread_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested;
  if (n == 0) {
    n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CTHRV_THREADS")) {
      try {
        const long cap = std::stol(env);
        if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
      } catch (const std::exception&) {
        // unparsable cap: ignore
      }
    }
  }
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(jobs, 1));
}

BatchResult fit_batch_from(const Trajectory& traj, const BatchConfig& config,
                           const std::vector<ModelParams>& starts) {
  config.validate();
  if (starts.empty()) throw ValidationError("batch needs at least one start");

  const NelderMeadOptions nm{config.max_evals, config.ftol, config.xtol};
  const auto objective = [&traj](const Eigen::Vector3d& x) {
    return rmse_spacing(ModelParams::unchecked(x(0), x(1), x(2)), traj);
  };

  std::vector<NelderMeadResult> runs(starts.size());
  auto run_one = [&](std::size_t i) { runs[i] = nelder_mead(objective, starts[i].as_vector(), config.bounds, nm); };

  const std::size_t workers = resolve_thread_count(config.threads, starts.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < starts.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < starts.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<StartResult> per_start;
  per_start.reserve(starts.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    per_start.push_back({starts[i], ModelParams::unchecked(r.x(0), r.x(1), r.x(2)), r.value,
                         r.evaluations, r.best_trace});
    if (r.value < runs[best].value) best = i;
  }
  return {per_start[best].final, per_start[best].objective, std::move(per_start)};
}

BatchResult fit_batch(const Trajectory& traj, const BatchConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::vector<ModelParams> starts;
  starts.reserve(config.n_starts);
  for (std::size_t i = 0; i < config.n_starts; ++i) {
    std::array<double, 3> x{};
    for (int j = 0; j < 3; ++j) {
      std::uniform_real_distribution<double> dist(config.bounds[j].low, config.bounds[j].high);
      x[j] = dist(rng);
    }
    starts.push_back(ModelParams::unchecked(x[0], x[1], x[2]));
  }
  return fit_batch_from(traj, config, starts);
}

}  // namespace cthrv
